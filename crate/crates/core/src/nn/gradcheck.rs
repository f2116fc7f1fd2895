//! Central finite-difference verification of the analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::head::cross_entropy;
use crate::nn::network::{Gradients, Network};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub tolerance: f64,
    pub step: f64,
    /// Check at most this many randomly chosen entries per parameter tensor.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { tolerance: 1e-4, step: 1e-5, max_per_tensor: Some(16), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checked: usize,
    /// Entries whose ±step perturbation crossed a ReLU kink or changed a
    /// pooling winner; the loss is not differentiable there.
    pub skipped: usize,
    /// Entries where both gradients are below what a central difference can
    /// resolve in double precision (see [`resolution`]).
    #[serde(default)]
    pub unresolved: usize,
    pub worst: Option<Offender>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.worst.as_ref().map_or(true, |w| w.rel_error < self.tolerance)
    }

    pub fn worst_rel_error(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |w| w.rel_error)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Units of roundoff assumed in a forward-pass loss.
pub const LOSS_ROUNDOFF_ULPS: f64 = 4.0;

/// Smallest derivative a central difference of step `step` measures to
/// relative `tolerance` at loss value `loss`.
pub fn resolution(loss: f64, step: f64, tolerance: f64) -> f64 {
    LOSS_ROUNDOFF_ULPS * f64::EPSILON * loss.abs().max(1.0) / (2.0 * step * tolerance)
}

pub fn gradient_check(net: &Network, input: &Tensor, label: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    gradient_check_with(net, input, label, opts, |n, x, y| n.loss_and_gradients(x, y).map(|(_, g)| g))
}

/// Like [`gradient_check`] but with a caller-supplied analytic gradient,
/// which lets tests confirm that a broken backward pass is caught.
pub fn gradient_check_with<F>(
    net: &Network,
    input: &Tensor,
    label: usize,
    opts: &GradCheckOptions,
    analytic: F,
) -> Result<GradCheckReport>
where
    F: Fn(&Network, &Tensor, usize) -> Result<Gradients>,
{
    let grads = analytic(net, input, label)?;
    let base = net.forward_trace(input)?;
    let base_pattern = base.pattern();
    let floor = resolution(cross_entropy(base.logits(), label)?, opts.step, opts.tolerance);
    let mut rng = Rng::new(opts.seed);
    let mut probe = net.clone();
    let mut report = GradCheckReport { tolerance: opts.tolerance, checked: 0, skipped: 0, unresolved: 0, worst: None };

    for t in 0..net.params().len() {
        let len = net.params()[t].data.len();
        let mut indices: Vec<usize> = (0..len).collect();
        if let Some(m) = opts.max_per_tensor.filter(|&m| m < len) {
            rng.shuffle(&mut indices);
            indices.truncate(m);
            indices.sort_unstable();
        }
        for i in indices {
            let original = net.params()[t].data[i];
            let mut eval = |value: f64| -> Result<(f64, bool)> {
                probe.params_mut()[t].data[i] = value;
                let trace = probe.forward_trace(input)?;
                let same = trace.pattern() == base_pattern;
                Ok((cross_entropy(trace.logits(), label)?, same))
            };
            let (plus, same_plus) = eval(original + opts.step)?;
            let (minus, same_minus) = eval(original - opts.step)?;
            probe.params_mut()[t].data[i] = original;
            if !(same_plus && same_minus) {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grads[t][i];
            if a.abs().max(numeric.abs()) < floor {
                report.unresolved += 1;
                continue;
            }
            let rel_error = relative_error(a, numeric);
            report.checked += 1;
            if report.worst.as_ref().map_or(true, |w| rel_error > w.rel_error) {
                report.worst =
                    Some(Offender { tensor: net.params()[t].name.clone(), index: i, analytic: a, numeric, rel_error });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{ArchitectureSpec, BlockSpec, ConvSpec, InputShape, LrnSpec, PoolSpec};

    fn tiny() -> ArchitectureSpec {
        let block = |k, c| BlockSpec {
            conv: ConvSpec { kernel_h: k, kernel_w: k, out_channels: c, stride: 1, padding: k / 2 },
            lrn: LrnSpec { alpha: 0.3, ..LrnSpec::default() },
            pool: PoolSpec { window: 3, stride: 2, padding: 1 },
        };
        let blocks = vec![block(3, 4), block(3, 5), block(3, 3), block(1, 4), block(1, 3)];
        ArchitectureSpec::new("tiny", InputShape { height: 12, width: 10, channels: 3 }, blocks, 2).unwrap()
    }

    #[test]
    fn fresh_network_passes() {
        let net = Network::new(tiny(), &mut Rng::new(1), None).unwrap();
        let x = Tensor::gaussian(net.input_shape(), 1.0, &mut Rng::new(2)).unwrap();
        let opts = GradCheckOptions { max_per_tensor: None, ..Default::default() };
        let report = gradient_check(&net, &x, 1, &opts).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.checked > 0);
    }

    #[test]
    fn flipped_conv_gradient_is_caught() {
        let net = Network::new(tiny(), &mut Rng::new(1), None).unwrap();
        let x = Tensor::gaussian(net.input_shape(), 1.0, &mut Rng::new(2)).unwrap();
        let report = gradient_check_with(&net, &x, 0, &GradCheckOptions::default(), |n, x, y| {
            let (_, mut g) = n.loss_and_gradients(x, y)?;
            g[2].iter_mut().for_each(|v| *v = -*v);
            Ok(g)
        })
        .unwrap();
        assert!(!report.passed());
        assert!(report.worst.unwrap().tensor.starts_with("conv_2"));
    }

    #[test]
    fn zero_input_dead_units() {
        let net = Network::new(tiny(), &mut Rng::new(1), None).unwrap();
        let x = Tensor::zeros(net.input_shape()).unwrap();
        let (_, g) = net.loss_and_gradients(&x, 0).unwrap();
        assert!(g[0].iter().all(|&v| v == 0.0));
        let report = gradient_check(&net, &x, 0, &GradCheckOptions::default()).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn resolution_scales_with_loss_and_step() {
        let r = resolution(1.0, 1e-5, 1e-4);
        assert!(r > 1e-7 && r < 1e-6, "{r}");
        assert_eq!(resolution(0.1, 1e-5, 1e-4), r);
        assert!((resolution(10.0, 1e-5, 1e-4) - 10.0 * r).abs() < 1e-18);
        assert!(resolution(1.0, 1e-3, 1e-4) < r);
        assert!(resolution(1.0, 1e-5, 1e-2) < r);
    }
}
