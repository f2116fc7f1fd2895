//! The assembled network: five conv blocks and a softmax head, with a
//! hand-written backward pass.

use crate::error::{Error, Result};
use crate::nn::conv::{conv_backward, conv_forward, conv_forward_cached, ConvCache};
use crate::nn::head::{classify, cross_entropy, fc_forward, softmax};
use crate::nn::lrn::{lrn_backward, lrn_forward, lrn_forward_cached, LrnCache};
use crate::nn::pool::{maxpool_backward, maxpool_forward, PoolArgmax};
use crate::nn::relu::{relu_backward, relu_forward};
use crate::nn::spec::ArchitectureSpec;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// A named, flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// One gradient buffer per parameter tensor, in parameter order.
pub type Gradients = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ArchitectureSpec,
    params: Vec<ParamTensor>,
    /// Per-channel value subtracted from every input (zero-centering).
    input_mean: Vec<f64>,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    conv: ConvCache,
    pre_relu: Tensor,
    lrn: LrnCache,
    pool: PoolArgmax,
}

/// Cached activations of one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    blocks: Vec<BlockTrace>,
    feature_shape: Shape,
    features: Vec<f64>,
    logits: Vec<f64>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// ReLU on/off pattern and pooling winners. Two inputs with the same
    /// pattern lie on the same smooth piece of the loss surface.
    pub fn pattern(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for b in &self.blocks {
            let mut word = 0u64;
            for (i, v) in b.pre_relu.data().iter().enumerate() {
                if *v > 0.0 {
                    word ^= (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                }
            }
            out.push(word);
            out.extend(b.pool.indices().iter().map(|&i| i as u64));
        }
        out
    }
}

impl Network {
    /// Zero-mean Gaussian weights, `sqrt(2 / fan_in)` unless `stddev`
    /// overrides it; zero biases.
    pub fn new(spec: ArchitectureSpec, rng: &mut Rng, stddev: Option<f64>) -> Result<Self> {
        spec.validate()?;
        let mut params = Vec::with_capacity(2 * spec.blocks.len() + 2);
        let draw = |len: usize, fan_in: usize, rng: &mut Rng| -> Result<Vec<f64>> {
            let sd = stddev.unwrap_or_else(|| (2.0 / fan_in as f64).sqrt());
            Ok(Tensor::gaussian(Shape::new(1, 1, 1, len)?, sd, rng)?.into_data())
        };
        for (i, (block, cin)) in spec.blocks.iter().zip(spec.conv_in_channels()).enumerate() {
            let c = &block.conv;
            let fan_in = c.kernel_h * c.kernel_w * cin;
            params.push(ParamTensor {
                name: format!("conv_{}.weight", i + 1),
                dims: vec![c.kernel_h, c.kernel_w, cin, c.out_channels],
                data: draw(fan_in * c.out_channels, fan_in, rng)?,
            });
            params.push(ParamTensor {
                name: format!("conv_{}.bias", i + 1),
                dims: vec![c.out_channels],
                data: vec![0.0; c.out_channels],
            });
        }
        let features = spec.feature_len()?;
        params.push(ParamTensor {
            name: "fc.weight".into(),
            dims: vec![features, spec.num_classes],
            data: draw(features * spec.num_classes, features, rng)?,
        });
        params.push(ParamTensor {
            name: "fc.bias".into(),
            dims: vec![spec.num_classes],
            data: vec![0.0; spec.num_classes],
        });
        let input_mean = vec![0.0; spec.input.channels];
        Ok(Self { spec, params, input_mean })
    }

    /// Rebuild from stored parameters, checking every name and shape.
    pub fn from_parts(spec: ArchitectureSpec, params: Vec<ParamTensor>) -> Result<Self> {
        let template = Network::new(spec.clone(), &mut Rng::new(0), Some(1.0))?;
        if template.params.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                template.params.len(),
                params.len()
            )));
        }
        for (want, got) in template.params.iter().zip(&params) {
            if want.name != got.name || want.dims != got.dims || want.data.len() != got.data.len() {
                return Err(Error::Shape(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.dims, want.name, want.dims
                )));
            }
            if got.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("non-finite value in `{}`", got.name)));
            }
        }
        let input_mean = vec![0.0; spec.input.channels];
        Ok(Self { spec, params, input_mean })
    }

    pub fn input_mean(&self) -> &[f64] {
        &self.input_mean
    }

    pub fn set_input_mean(&mut self, mean: Vec<f64>) -> Result<()> {
        if mean.len() != self.spec.input.channels || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "input mean needs {} finite values, got {:?}",
                self.spec.input.channels, mean
            )));
        }
        self.input_mean = mean;
        Ok(())
    }

    /// Mean of every channel over a set of images.
    pub fn channel_mean<'a>(images: impl IntoIterator<Item = &'a Tensor>, channels: usize) -> Vec<f64> {
        let mut sum = vec![0.0; channels];
        let mut n = 0usize;
        for img in images {
            for px in img.data().chunks_exact(channels) {
                for (s, v) in sum.iter_mut().zip(px) {
                    *s += v;
                }
            }
            n += img.data().len() / channels;
        }
        sum.iter().map(|s| if n > 0 { s / n as f64 } else { 0.0 }).collect()
    }

    fn centered(&self, input: &Tensor) -> Result<Tensor> {
        if self.input_mean.iter().all(|&m| m == 0.0) {
            return Ok(input.clone());
        }
        let c = self.input_mean.len();
        let data = input.data().iter().enumerate().map(|(i, v)| v - self.input_mean[i % c]).collect();
        Tensor::from_vec(input.shape(), data)
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn input_shape(&self) -> Shape {
        let i = self.spec.input;
        Shape { batch: 1, height: i.height, width: i.width, channels: i.channels }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "network `{}` expects input {}, got {}",
                self.spec.name,
                self.input_shape(),
                input.shape()
            )));
        }
        Ok(())
    }

    fn fc(&self) -> (&[f64], &[f64]) {
        let n = self.params.len();
        (&self.params[n - 2].data, &self.params[n - 1].data)
    }

    /// Flattened output of the last pooling layer. Pure inference; nothing is
    /// cached.
    pub fn extract_features(&self, image: &Tensor) -> Result<Vec<f64>> {
        self.check_input(image)?;
        let mut x = self.centered(image)?;
        for (i, block) in self.spec.blocks.iter().enumerate() {
            let (w, b) = (&self.params[2 * i].data, &self.params[2 * i + 1].data);
            x = conv_forward(&x, &block.conv, w, b)?;
            x = relu_forward(&x)?;
            x = lrn_forward(&x, &block.lrn)?;
            x = maxpool_forward(&x, &block.pool)?.0;
        }
        Ok(x.into_data())
    }

    /// Softmax class probabilities.
    pub fn predict_proba(&self, image: &Tensor) -> Result<Vec<f64>> {
        let features = self.extract_features(image)?;
        let (w, b) = self.fc();
        Ok(softmax(&fc_forward(&features, w, b)?))
    }

    /// The classification layer: argmax over the softmax output.
    pub fn classify(&self, image: &Tensor) -> Result<usize> {
        self.predict_proba(image).map(|p| classify(&p))
    }

    /// Training-mode forward pass keeping every activation needed by
    /// [`Network::backward`].
    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace> {
        self.check_input(input)?;
        let mut x = self.centered(input)?;
        let mut blocks = Vec::with_capacity(self.spec.blocks.len());
        for (i, block) in self.spec.blocks.iter().enumerate() {
            let (w, b) = (&self.params[2 * i].data, &self.params[2 * i + 1].data);
            let (pre_relu, conv) = conv_forward_cached(&x, &block.conv, w, b)?;
            let act = relu_forward(&pre_relu)?;
            let (normed, lrn) = lrn_forward_cached(&act, &block.lrn)?;
            let (pooled, pool) = maxpool_forward(&normed, &block.pool)?;
            blocks.push(BlockTrace { conv, pre_relu, lrn, pool });
            x = pooled;
        }
        let feature_shape = x.shape();
        let features = x.into_data();
        let (w, b) = self.fc();
        let logits = fc_forward(&features, w, b)?;
        Ok(Trace { blocks, feature_shape, features, logits })
    }

    /// Cross-entropy loss of a traced sample and the gradient of that loss
    /// with respect to every parameter.
    pub fn backward(&self, trace: &Trace, label: usize) -> Result<(f64, Gradients)> {
        let loss = cross_entropy(&trace.logits, label)?;
        let classes = self.spec.num_classes;
        let mut dlogits = softmax(&trace.logits);
        dlogits[label] -= 1.0;

        let mut grads: Gradients = vec![Vec::new(); self.params.len()];
        let n = self.params.len();
        let (fc_w, _) = self.fc();
        let mut dw = vec![0.0; fc_w.len()];
        let mut dfeat = vec![0.0; trace.features.len()];
        for (((x, w_row), dw_row), df) in trace
            .features
            .iter()
            .zip(fc_w.chunks_exact(classes))
            .zip(dw.chunks_exact_mut(classes))
            .zip(dfeat.iter_mut())
        {
            for ((d, w), g) in dw_row.iter_mut().zip(w_row).zip(&dlogits) {
                *d = x * g;
                *df += w * g;
            }
        }
        grads[n - 2] = dw;
        grads[n - 1] = dlogits;

        let mut g = Tensor::from_vec(trace.feature_shape, dfeat)?;
        for (i, (block, bt)) in self.spec.blocks.iter().zip(&trace.blocks).enumerate().rev() {
            g = maxpool_backward(&g, &bt.pool)?;
            g = lrn_backward(&g, &bt.lrn, &block.lrn)?;
            g = relu_backward(&g, &bt.pre_relu)?;
            let cg = conv_backward(&g, &bt.conv, &block.conv, &self.params[2 * i].data, i > 0)?;
            grads[2 * i] = cg.weights;
            grads[2 * i + 1] = cg.bias;
            if let Some(dx) = cg.input {
                g = dx;
            }
        }
        Ok((loss, grads))
    }

    pub fn loss_and_gradients(&self, input: &Tensor, label: usize) -> Result<(f64, Gradients)> {
        let trace = self.forward_trace(input)?;
        self.backward(&trace, label)
    }

    pub fn loss(&self, input: &Tensor, label: usize) -> Result<f64> {
        let features = self.extract_features(input)?;
        let (w, b) = self.fc();
        cross_entropy(&fc_forward(&features, w, b)?, label)
    }
}
