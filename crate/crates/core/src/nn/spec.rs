//! Architecture description and shape arithmetic for the five-block
//! conv → ReLU → cross-channel normalization → max-pool network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub out_channels: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

/// Across-channel response normalization:
/// `b_c = a_c / (k + (alpha/n)·Σ_{c' ∈ window(c)} a_{c'}²)^beta`, where the
/// window is the channels within `depth_radius` of `c`, clipped to the valid
/// range, and `n` is the clipped window size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrnSpec {
    pub depth_radius: usize,
    pub bias_k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnSpec {
    fn default() -> Self {
        Self { depth_radius: 2, bias_k: 2.0, alpha: 1e-4, beta: 0.75 }
    }
}

/// Square max-pooling window. Padded positions never win the max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub conv: ConvSpec,
    #[serde(default)]
    pub lrn: LrnSpec,
    pub pool: PoolSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Input,
    Conv,
    Relu,
    Norm,
    MaxPool,
    FullyConnected,
    Softmax,
    Classification,
}

/// One entry of the layer chain with its output shape `(h, w, c)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub kind: LayerKind,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A validated network description. Construct through [`ArchitectureSpec::new`]
/// (or the presets) so every intermediate shape is known to be positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub name: String,
    pub input: InputShape,
    pub blocks: Vec<BlockSpec>,
    #[serde(default = "two")]
    pub num_classes: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

/// `floor((n + 2·pad − k) / stride) + 1`, or `None` when the window does not fit.
pub fn sliding_output(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let span = (n + 2 * pad).checked_sub(k)?;
    Some(span / stride + 1)
}

impl ArchitectureSpec {
    pub fn new(name: impl Into<String>, input: InputShape, blocks: Vec<BlockSpec>, num_classes: usize) -> Result<Self> {
        let spec = Self { name: name.into(), input, blocks, num_classes };
        spec.validate()?;
        Ok(spec)
    }

    /// The published configuration: 500 rows × 400 columns × 3 input, filters
    /// 15×15×10, 11×11×15, 9×9×20, 7×7×25, 5×5×30 (valid, stride 1) and
    /// 3×3/2 pooling.
    pub fn paper() -> Result<Self> {
        let kernels = [(15, 10), (11, 15), (9, 20), (7, 25), (5, 30)];
        let blocks = kernels
            .iter()
            .map(|&(k, c)| BlockSpec {
                conv: ConvSpec { kernel_h: k, kernel_w: k, out_channels: c, stride: 1, padding: 0 },
                lrn: LrnSpec::default(),
                pool: PoolSpec { window: 3, stride: 2, padding: 0 },
            })
            .collect();
        let input = InputShape { height: 500, width: 400, channels: 3 };
        Self::new("paper", input, blocks, 2)
    }

    /// Laptop-scale variant with the same block structure: 32×64×3 input,
    /// kernels 5,3,3,3,3 with same-size padding, channels 10..30, and 3×3/2
    /// pooling padded by one so each block halves (rounding up) the map.
    pub fn desk() -> Result<Self> {
        let kernels = [(5, 10), (3, 15), (3, 20), (3, 25), (3, 30)];
        let blocks = kernels
            .iter()
            .map(|&(k, c)| BlockSpec {
                conv: ConvSpec { kernel_h: k, kernel_w: k, out_channels: c, stride: 1, padding: k / 2 },
                lrn: LrnSpec::default(),
                pool: PoolSpec { window: 3, stride: 2, padding: 1 },
            })
            .collect();
        let input = InputShape { height: 32, width: 64, channels: 3 };
        Self::new("desk", input, blocks, 2)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Self::paper(),
            "desk" => Self::desk(),
            other => Err(Error::Config(format!("unknown architecture preset `{other}`"))),
        }
    }

    /// Parse a TOML description and validate it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Same blocks, different input geometry.
    pub fn with_input(&self, height: usize, width: usize) -> Result<Self> {
        let mut spec = self.clone();
        spec.input.height = height;
        spec.input.width = width;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_arithmetic().map(|_| ())
    }

    /// Every layer in order with its output shape. Fails with the name of the
    /// first layer whose output would be empty or whose parameters are invalid.
    pub fn shape_arithmetic(&self) -> Result<Vec<LayerShape>> {
        let bad = |layer: String, reason: String| Error::Spec { layer, reason };
        let InputShape { height, width, channels } = self.input;
        if height == 0 || width == 0 || channels == 0 {
            return Err(bad("input".into(), "input dimensions must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(bad("fc".into(), "need at least two classes".into()));
        }
        let mut layers = vec![LayerShape { name: "input".into(), kind: LayerKind::Input, height, width, channels }];
        let (mut h, mut w) = (height, width);
        for (i, block) in self.blocks.iter().enumerate() {
            let n = i + 1;
            let conv = &block.conv;
            let name = format!("conv_{n}");
            if conv.kernel_h == 0 || conv.kernel_w == 0 || conv.out_channels == 0 || conv.stride == 0 {
                return Err(bad(name, "kernel, channel and stride sizes must be >= 1".into()));
            }
            let out_h = sliding_output(h, conv.kernel_h, conv.stride, conv.padding);
            let out_w = sliding_output(w, conv.kernel_w, conv.stride, conv.padding);
            let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
                return Err(bad(
                    name,
                    format!(
                        "{}x{} kernel does not fit a {h}x{w} input (padding {})",
                        conv.kernel_h, conv.kernel_w, conv.padding
                    ),
                ));
            };
            (h, w) = (out_h, out_w);
            let c = conv.out_channels;
            layers.push(LayerShape { name, kind: LayerKind::Conv, height: h, width: w, channels: c });
            layers.push(LayerShape {
                name: format!("relu_{n}"),
                kind: LayerKind::Relu,
                height: h,
                width: w,
                channels: c,
            });

            let lrn = &block.lrn;
            let name = format!("norm_{n}");
            if !(lrn.bias_k > 0.0 && lrn.alpha >= 0.0 && lrn.beta > 0.0)
                || ![lrn.bias_k, lrn.alpha, lrn.beta].iter().all(|v| v.is_finite())
            {
                return Err(bad(name, "need k > 0, alpha >= 0, beta > 0".into()));
            }
            layers.push(LayerShape { name, kind: LayerKind::Norm, height: h, width: w, channels: c });

            let pool = &block.pool;
            let name = format!("maxpool_{n}");
            if pool.window == 0 || pool.stride == 0 || pool.padding >= pool.window {
                return Err(bad(name, "need window >= 1, stride >= 1, padding < window".into()));
            }
            let out_h = sliding_output(h, pool.window, pool.stride, pool.padding);
            let out_w = sliding_output(w, pool.window, pool.stride, pool.padding);
            let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
                return Err(bad(name, format!("{0}x{0} window does not fit a {h}x{w} input", pool.window)));
            };
            (h, w) = (out_h, out_w);
            layers.push(LayerShape { name, kind: LayerKind::MaxPool, height: h, width: w, channels: c });
        }
        let k = self.num_classes;
        for (name, kind) in [
            ("fc", LayerKind::FullyConnected),
            ("softmax", LayerKind::Softmax),
            ("classoutput", LayerKind::Classification),
        ] {
            layers.push(LayerShape { name: name.into(), kind, height: 1, width: 1, channels: k });
        }
        Ok(layers)
    }

    /// 1 input + 4 per block + fully-connected, softmax and classification.
    pub fn layer_count(&self) -> usize {
        1 + 4 * self.blocks.len() + 3
    }

    /// Shape of the last pooling output (the feature map handed to the head).
    pub fn feature_shape(&self) -> Result<LayerShape> {
        let layers = self.shape_arithmetic()?;
        Ok(layers
            .iter()
            .rev()
            .find(|l| matches!(l.kind, LayerKind::MaxPool | LayerKind::Input))
            .cloned()
            .expect("input layer is always present"))
    }

    pub fn feature_len(&self) -> Result<usize> {
        Ok(self.feature_shape()?.len())
    }

    /// Input channel count seen by each block's convolution.
    pub(crate) fn conv_in_channels(&self) -> Vec<usize> {
        let mut c = self.input.channels;
        self.blocks
            .iter()
            .map(|b| {
                let cin = c;
                c = b.conv.out_channels;
                cin
            })
            .collect()
    }

    /// Stable 64-bit digest of the canonical JSON form.
    pub fn digest(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("spec serializes");
        let hash = Sha256::digest(&json);
        u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
    }
}
