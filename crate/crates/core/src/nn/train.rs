//! Mini-batch SGD with momentum on softmax cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::{Gradients, Network};
use crate::par;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fixed initialization stddev; `None` means `sqrt(2 / fan_in)` per layer.
    pub weight_init_stddev: Option<f64>,
    /// Subtract the training images' per-channel mean from every input.
    pub zero_center: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 10,
            batch_size: 8,
            weight_init_stddev: None,
            zero_center: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr_ok = self.learning_rate > 0.0 && self.learning_rate.is_finite();
        if !lr_ok {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if let Some(sd) = self.weight_init_stddev {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::Config(format!("weight_init_stddev must be > 0, got {sd}")));
            }
        }
        Ok(())
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct Sgd {
    velocity: Gradients,
}

impl Sgd {
    pub fn new(net: &Network) -> Self {
        Self { velocity: net.params().iter().map(|p| vec![0.0; p.data.len()]).collect() }
    }

    /// One update on a mini-batch. Per-sample gradients are computed in
    /// parallel and summed in batch order. Returns the mean loss.
    pub fn step(&mut self, net: &mut Network, inputs: &[&Tensor], labels: &[usize], cfg: &TrainConfig) -> Result<f64> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::Input(format!("{} inputs with {} labels", inputs.len(), labels.len())));
        }
        let classes = net.spec().num_classes;
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Input(format!("label {bad} with {classes} classes")));
        }
        let pairs: Vec<(&Tensor, usize)> = inputs.iter().copied().zip(labels.iter().copied()).collect();
        let shared: &Network = net;
        let results = par::map(&pairs, |&(x, y)| shared.loss_and_gradients(x, y));

        let scale = 1.0 / inputs.len() as f64;
        let mut loss = 0.0;
        let mut total: Gradients = net.params().iter().map(|p| vec![0.0; p.data.len()]).collect();
        for result in results {
            // overflow inside a layer surfaces as a non-finite activation
            let (l, grads) = result.map_err(|e| match e {
                Error::Parameter(msg) => Error::Training(msg),
                other => other,
            })?;
            loss += l;
            for (acc, g) in total.iter_mut().zip(grads) {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss at learning rate {}; reduce it", cfg.learning_rate)));
        }
        for ((param, vel), grad) in net.params_mut().iter_mut().zip(&mut self.velocity).zip(&total) {
            for ((p, v), g) in param.data.iter_mut().zip(vel.iter_mut()).zip(grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * scale * g;
                *p += *v;
            }
            if param.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!("parameter `{}` became non-finite", param.name)));
            }
        }
        Ok(loss)
    }
}

/// Convenience wrapper running a single SGD step with fresh momentum state.
pub fn train_step(net: &mut Network, inputs: &[&Tensor], labels: &[usize], cfg: &TrainConfig) -> Result<f64> {
    Sgd::new(net).step(net, inputs, labels, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Train for `cfg.epochs` epochs, reshuffling the sample order each epoch.
/// With `cfg.zero_center` the input mean is fitted first.
pub fn train(net: &mut Network, samples: &[(Tensor, usize)], cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Input("no training samples".into()));
    }
    if cfg.zero_center {
        let c = net.spec().input.channels;
        net.set_input_mean(Network::channel_mean(samples.iter().map(|(x, _)| x), c))?;
    }
    let mut sgd = Sgd::new(net);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<&Tensor> = chunk.iter().map(|&i| &samples[i].0).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].1).collect();
            sum += sgd.step(net, &inputs, &labels, cfg)?;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::debug!("{} epoch {}: loss {mean:.5}", net.spec().name, epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome { epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{ArchitectureSpec, BlockSpec, ConvSpec, InputShape, LrnSpec, PoolSpec};
    use crate::tensor::Shape;

    fn small_spec() -> ArchitectureSpec {
        let block = BlockSpec {
            conv: ConvSpec { kernel_h: 3, kernel_w: 3, out_channels: 4, stride: 1, padding: 1 },
            lrn: LrnSpec::default(),
            pool: PoolSpec { window: 3, stride: 2, padding: 1 },
        };
        ArchitectureSpec::new("small", InputShape { height: 8, width: 8, channels: 3 }, vec![block; 5], 2).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut net = Network::new(small_spec(), &mut Rng::new(1), None).unwrap();
        let before = net.clone();
        let x = Tensor::gaussian(net.input_shape(), 1.0, &mut Rng::new(2)).unwrap();
        let zero = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        let loss = train_step(&mut net, &[&x], &[1], &zero).unwrap();
        assert_eq!(net, before);
        let p = before.predict_proba(&x).unwrap();
        assert!((loss + p[1].ln()).abs() < 1e-12);
    }

    #[test]
    fn two_sample_toy_task_converges() {
        let spec = small_spec();
        let mut net = Network::new(spec, &mut Rng::new(3), None).unwrap();
        let shape = Shape::new(1, 8, 8, 3).unwrap();
        let bright = Tensor::from_vec(shape, vec![1.0; shape.len()]).unwrap();
        let dark =
            Tensor::from_vec(shape, (0..shape.len()).map(|i| if i % 2 == 0 { -1.0 } else { 0.5 }).collect()).unwrap();
        let cfg = TrainConfig { learning_rate: 0.05, ..TrainConfig::default() };
        let mut sgd = Sgd::new(&net);
        let mut loss = f64::INFINITY;
        for _ in 0..500 {
            loss = sgd.step(&mut net, &[&bright, &dark], &[0, 1], &cfg).unwrap();
            if loss < 0.01 {
                break;
            }
        }
        assert!(loss < 0.01, "loss {loss}");
        assert_eq!(net.classify(&bright).unwrap(), 0);
        assert_eq!(net.classify(&dark).unwrap(), 1);
    }

    #[test]
    fn divergence_is_reported() {
        let mut net = Network::new(small_spec(), &mut Rng::new(1), Some(1e160)).unwrap();
        let x = Tensor::gaussian(net.input_shape(), 1e160, &mut Rng::new(2)).unwrap();
        let cfg = TrainConfig::default();
        let err = train_step(&mut net, &[&x], &[0], &cfg).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err}");
    }

    #[test]
    fn training_is_deterministic() {
        let spec = small_spec();
        let mut rng = Rng::new(9);
        let data: Vec<(Tensor, usize)> = (0..6)
            .map(|i| (Tensor::gaussian(Shape::new(1, 8, 8, 3).unwrap(), 1.0, &mut rng).unwrap(), i % 2))
            .collect();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::default() };
        let run = || {
            let mut net = Network::new(spec.clone(), &mut Rng::new(4), None).unwrap();
            let out = train(&mut net, &data, &cfg, &mut Rng::new(5)).unwrap();
            (net, out)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }
}
