//! Across-channel local response ("cross-channel") normalization.

use crate::error::{Error, Result};
use crate::nn::spec::LrnSpec;
use crate::tensor::Tensor;

/// Per-element denominators `s = k + (alpha/n)·Σ a²` from the forward pass.
#[derive(Debug, Clone)]
pub struct LrnCache {
    pub(crate) input: Tensor,
    pub(crate) scale: Vec<f64>,
    /// `scale^(−β)`.
    pub(crate) factor: Vec<f64>,
}

#[inline]
fn neg_pow(s: f64, beta: f64) -> f64 {
    if beta == 0.75 {
        let r = s.sqrt();
        1.0 / (r * r.sqrt())
    } else {
        s.powf(-beta)
    }
}

#[inline]
fn window(c: usize, radius: usize, channels: usize) -> (usize, usize) {
    (c.saturating_sub(radius), (c + radius).min(channels - 1))
}

pub fn lrn_forward(input: &Tensor, spec: &LrnSpec) -> Result<Tensor> {
    lrn_forward_cached(input, spec).map(|(t, _)| t)
}

pub fn lrn_forward_cached(input: &Tensor, spec: &LrnSpec) -> Result<(Tensor, LrnCache)> {
    let channels = input.shape().channels;
    let mut scale = vec![0.0; input.data().len()];
    let mut factor = vec![0.0; input.data().len()];
    let mut out = vec![0.0; input.data().len()];
    let mut squares = vec![0.0; channels];
    for (((a, s), f), b) in input
        .data()
        .chunks_exact(channels)
        .zip(scale.chunks_exact_mut(channels))
        .zip(factor.chunks_exact_mut(channels))
        .zip(out.chunks_exact_mut(channels))
    {
        for (sq, v) in squares.iter_mut().zip(a) {
            *sq = v * v;
        }
        for c in 0..channels {
            let (lo, hi) = window(c, spec.depth_radius, channels);
            let n = (hi - lo + 1) as f64;
            let sum: f64 = squares[lo..=hi].iter().sum();
            s[c] = spec.bias_k + spec.alpha / n * sum;
            f[c] = neg_pow(s[c], spec.beta);
            b[c] = a[c] * f[c];
        }
    }
    let cache = LrnCache { input: input.clone(), scale, factor };
    Ok((Tensor::from_vec(input.shape(), out)?, cache))
}

/// `∂L/∂a_j = g_j·s_j^(−β) − 2β·a_j·Σ_{c: |c−j| ≤ r} (alpha/n_c)·g_c·a_c·s_c^(−β−1)`.
pub fn lrn_backward(grad: &Tensor, cache: &LrnCache, spec: &LrnSpec) -> Result<Tensor> {
    let input = &cache.input;
    if grad.shape() != input.shape() {
        return Err(Error::Shape(format!("{} vs {}", grad.shape(), input.shape())));
    }
    let channels = input.shape().channels;
    let mut dx = vec![0.0; input.data().len()];
    let mut coupling = vec![0.0; channels];
    for ((((a, s), f), g), d) in input
        .data()
        .chunks_exact(channels)
        .zip(cache.scale.chunks_exact(channels))
        .zip(cache.factor.chunks_exact(channels))
        .zip(grad.data().chunks_exact(channels))
        .zip(dx.chunks_exact_mut(channels))
    {
        for c in 0..channels {
            let (lo, hi) = window(c, spec.depth_radius, channels);
            let n = (hi - lo + 1) as f64;
            coupling[c] = spec.alpha / n * g[c] * a[c] * f[c] / s[c];
        }
        for j in 0..channels {
            let (lo, hi) = window(j, spec.depth_radius, channels);
            let cross: f64 = coupling[lo..=hi].iter().sum();
            d[j] = g[j] * f[j] - 2.0 * spec.beta * a[j] * cross;
        }
    }
    Tensor::from_vec(input.shape(), dx)
}

/// Gradient of `Σ grad ⊙ lrn(input)` with respect to `input`.
pub fn lrn_backward_from_input(grad: &Tensor, input: &Tensor, spec: &LrnSpec) -> Result<Tensor> {
    let (_, cache) = lrn_forward_cached(input, spec)?;
    lrn_backward(grad, &cache, spec)
}
