//! Cross-correlation (no kernel flip) through im2col + GEMM.
//!
//! Weights are stored `[kh, kw, c_in, c_out]`, i.e. a `(kh·kw·c_in) × c_out`
//! matrix whose row order matches the im2col column order `(ky, kx, ci)`.

use crate::error::{Error, Result};
use crate::nn::spec::{sliding_output, ConvSpec};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Shape, Tensor};

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub(crate) input_shape: Shape,
    pub(crate) cols: Vec<f64>,
}

pub fn output_shape(input: Shape, spec: &ConvSpec) -> Result<Shape> {
    let fit = |n, k| sliding_output(n, k, spec.stride, spec.padding);
    match (fit(input.height, spec.kernel_h), fit(input.width, spec.kernel_w)) {
        (Some(h), Some(w)) if spec.stride > 0 => Shape::new(input.batch, h, w, spec.out_channels),
        _ => Err(Error::Shape(format!(
            "{}x{} kernel (stride {}, padding {}) larger than input {input}",
            spec.kernel_h, spec.kernel_w, spec.stride, spec.padding
        ))),
    }
}

fn check_params(input: Shape, spec: &ConvSpec, weights: &[f64], bias: &[f64]) -> Result<usize> {
    let k = spec.kernel_h * spec.kernel_w * input.channels;
    if weights.len() != k * spec.out_channels {
        return Err(Error::Shape(format!(
            "expected {} weights for a {}x{}x{}x{} kernel, got {}",
            k * spec.out_channels,
            spec.kernel_h,
            spec.kernel_w,
            input.channels,
            spec.out_channels,
            weights.len()
        )));
    }
    if bias.len() != spec.out_channels {
        return Err(Error::Shape(format!("expected {} biases, got {}", spec.out_channels, bias.len())));
    }
    Ok(k)
}

/// Unroll every receptive field of batch entry `b` into one row.
fn im2col(input: &Tensor, b: usize, spec: &ConvSpec, out: Shape, cols: &mut [f64]) {
    let s = input.shape();
    let cin = s.channels;
    let row_len = spec.kernel_h * spec.kernel_w * cin;
    let data = input.data();
    let mut rows = cols.chunks_exact_mut(row_len);
    for oy in 0..out.height {
        for ox in 0..out.width {
            let row = rows.next().expect("row count matches output size");
            let mut dst = 0;
            for ky in 0..spec.kernel_h {
                let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                for kx in 0..spec.kernel_w {
                    let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                    let patch = &mut row[dst..dst + cin];
                    if iy < 0 || ix < 0 || iy as usize >= s.height || ix as usize >= s.width {
                        patch.fill(0.0);
                    } else {
                        let src = input.offset(b, iy as usize, ix as usize, 0);
                        patch.copy_from_slice(&data[src..src + cin]);
                    }
                    dst += cin;
                }
            }
        }
    }
}

/// Scatter-add the column gradient back onto the input grid.
fn col2im(dcols: &[f64], spec: &ConvSpec, out: Shape, input: Shape, b: usize, dx: &mut [f64]) {
    let cin = input.channels;
    let row_len = spec.kernel_h * spec.kernel_w * cin;
    let mut rows = dcols.chunks_exact(row_len);
    for oy in 0..out.height {
        for ox in 0..out.width {
            let row = rows.next().expect("row count matches output size");
            let mut src = 0;
            for ky in 0..spec.kernel_h {
                let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                for kx in 0..spec.kernel_w {
                    let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < input.height && (ix as usize) < input.width {
                        let dst = ((b * input.height + iy as usize) * input.width + ix as usize) * cin;
                        for (d, g) in dx[dst..dst + cin].iter_mut().zip(&row[src..src + cin]) {
                            *d += g;
                        }
                    }
                    src += cin;
                }
            }
        }
    }
}

pub fn conv_forward(input: &Tensor, spec: &ConvSpec, weights: &[f64], bias: &[f64]) -> Result<Tensor> {
    conv_forward_cached(input, spec, weights, bias).map(|(t, _)| t)
}

pub fn conv_forward_cached(
    input: &Tensor,
    spec: &ConvSpec,
    weights: &[f64],
    bias: &[f64],
) -> Result<(Tensor, ConvCache)> {
    let in_shape = input.shape();
    let out = output_shape(in_shape, spec)?;
    let k = check_params(in_shape, spec, weights, bias)?;
    let positions = out.height * out.width;
    let n = spec.out_channels;

    let mut cols = vec![0.0; in_shape.batch * positions * k];
    let mut data = vec![0.0; out.len()];
    for b in 0..in_shape.batch {
        let cols_b = &mut cols[b * positions * k..(b + 1) * positions * k];
        im2col(input, b, spec, out, cols_b);
        let out_b = &mut data[b * positions * n..(b + 1) * positions * n];
        for row in out_b.chunks_exact_mut(n) {
            row.copy_from_slice(bias);
        }
        gemm_nn(cols_b, weights, positions, k, n, out_b);
    }
    let cache = ConvCache { input_shape: in_shape, cols };
    Ok((Tensor::from_vec(out, data)?, cache))
}

/// Gradients of a convolution.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv_backward(
    grad_out: &Tensor,
    cache: &ConvCache,
    spec: &ConvSpec,
    weights: &[f64],
    need_input_grad: bool,
) -> Result<ConvGrads> {
    let in_shape = cache.input_shape;
    let out = output_shape(in_shape, spec)?;
    if grad_out.shape() != out {
        return Err(Error::Shape(format!("gradient {} does not match conv output {out}", grad_out.shape())));
    }
    let k = spec.kernel_h * spec.kernel_w * in_shape.channels;
    let n = spec.out_channels;
    let positions = out.height * out.width;

    let mut dw = vec![0.0; k * n];
    let mut db = vec![0.0; n];
    let mut dx = need_input_grad.then(|| vec![0.0; in_shape.len()]);
    let mut dcols = vec![0.0; positions * k];
    for b in 0..in_shape.batch {
        let g = &grad_out.data()[b * positions * n..(b + 1) * positions * n];
        let cols_b = &cache.cols[b * positions * k..(b + 1) * positions * k];
        gemm_tn(cols_b, g, positions, k, n, &mut dw);
        for row in g.chunks_exact(n) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        if let Some(dx) = dx.as_mut() {
            dcols.fill(0.0);
            gemm_nt(g, weights, positions, n, k, &mut dcols);
            col2im(&dcols, spec, out, in_shape, b, dx);
        }
    }
    let input = dx.map(|d| Tensor::from_vec(in_shape, d)).transpose()?;
    Ok(ConvGrads { input, weights: dw, bias: db })
}
