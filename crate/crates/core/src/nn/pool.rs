//! Max pooling with argmax routing.

use crate::error::{Error, Result};
use crate::nn::spec::{sliding_output, PoolSpec};
use crate::tensor::{Shape, Tensor};

/// For each output element, the flat offset of the winning input element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolArgmax {
    pub(crate) input_shape: Shape,
    pub(crate) indices: Vec<usize>,
}

impl PoolArgmax {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

pub fn output_shape(input: Shape, spec: &PoolSpec) -> Result<Shape> {
    if spec.window == 0 || spec.stride == 0 || spec.padding >= spec.window {
        return Err(Error::Shape(format!("invalid pool {spec:?}")));
    }
    let fit = |n| sliding_output(n, spec.window, spec.stride, spec.padding);
    match (fit(input.height), fit(input.width)) {
        (Some(h), Some(w)) => Shape::new(input.batch, h, w, input.channels),
        _ => Err(Error::Shape(format!("{0}x{0} pool window larger than input {input}", spec.window))),
    }
}

/// Window maxima. Ties go to the first position in row-major window order.
pub fn maxpool_forward(input: &Tensor, spec: &PoolSpec) -> Result<(Tensor, PoolArgmax)> {
    let s = input.shape();
    let out = output_shape(s, spec)?;
    let data = input.data();
    let mut values = Vec::with_capacity(out.len());
    let mut indices = Vec::with_capacity(out.len());
    let clamp = |start: isize, len: usize| {
        let lo = start.max(0) as usize;
        let hi = ((start + spec.window as isize) as usize).min(len);
        lo..hi
    };
    for b in 0..s.batch {
        for oy in 0..out.height {
            let rows = clamp((oy * spec.stride) as isize - spec.padding as isize, s.height);
            for ox in 0..out.width {
                let cols = clamp((ox * spec.stride) as isize - spec.padding as isize, s.width);
                for c in 0..s.channels {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for y in rows.clone() {
                        for x in cols.clone() {
                            let idx = input.offset(b, y, x, c);
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    values.push(best);
                    indices.push(best_idx);
                }
            }
        }
    }
    let argmax = PoolArgmax { input_shape: s, indices };
    Ok((Tensor::from_vec(out, values)?, argmax))
}

/// Route each output gradient to its argmax position.
pub fn maxpool_backward(grad: &Tensor, argmax: &PoolArgmax) -> Result<Tensor> {
    if grad.data().len() != argmax.indices.len() {
        return Err(Error::Shape(format!(
            "gradient of {} elements for {} pooled outputs",
            grad.data().len(),
            argmax.indices.len()
        )));
    }
    let mut dx = vec![0.0; argmax.input_shape.len()];
    for (&idx, g) in argmax.indices.iter().zip(grad.data()) {
        dx[idx] += g;
    }
    Tensor::from_vec(argmax.input_shape, dx)
}
