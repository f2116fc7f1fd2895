//! Wiring stereo pairs into hemisphere networks.
//!
//! | mode           | networks | training samples per pair       | SVM samples per pair |
//! |----------------|----------|---------------------------------|----------------------|
//! | `mono`         | 1        | 2 whole images                  | 2 (one per eye)      |
//! | `bcnn1`        | 2        | 2 fields per hemisphere         | 2 (one per eye)      |
//! | `bcnn2`        | 2        | 1 whole image per hemisphere    | 1                    |
//! | `mono-chiasma` | 2        | 1 field per hemisphere (left eye only) | 1             |
//!
//! A visual field is a column half of the image array: the left field is
//! columns `[0, ceil(w/2))`, the right field the rest. In `bcnn1` the
//! left-hemisphere network only ever sees left fields (of both eyes) and the
//! right-hemisphere network only right fields. Feature vectors are always
//! assembled left component first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{train, ArchitectureSpec, Network, TrainConfig};
use crate::par;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoutingMode {
    #[serde(rename = "mono")]
    Mono,
    #[serde(rename = "bcnn1")]
    Chiasma,
    #[serde(rename = "bcnn2")]
    Achiasma,
    #[serde(rename = "mono-chiasma")]
    MonoChiasma,
}

impl RoutingMode {
    pub const ALL: [RoutingMode; 4] = [Self::Mono, Self::Chiasma, Self::Achiasma, Self::MonoChiasma];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mono => "mono",
            Self::Chiasma => "bcnn1",
            Self::Achiasma => "bcnn2",
            Self::MonoChiasma => "mono-chiasma",
        }
    }

    pub fn hemispheres(self) -> usize {
        match self {
            Self::Mono => 1,
            _ => 2,
        }
    }

    /// Whether the hemisphere networks see half-width visual fields.
    pub fn uses_fields(self) -> bool {
        matches!(self, Self::Chiasma | Self::MonoChiasma)
    }

    /// Stable small integer used when deriving per-mode seeds.
    pub fn index(self) -> u64 {
        match self {
            Self::Mono => 0,
            Self::Chiasma => 1,
            Self::Achiasma => 2,
            Self::MonoChiasma => 3,
        }
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (expected mono, bcnn1, bcnn2 or mono-chiasma)")))
    }
}

/// A labelled left/right image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub pair_id: String,
    /// Pair id of the original this sample was derived from (itself for
    /// originals, the source pair for augmented variants).
    pub source: String,
    pub left_eye: Tensor,
    pub right_eye: Tensor,
    pub label: usize,
}

impl StereoSample {
    pub fn new(pair_id: impl Into<String>, left_eye: Tensor, right_eye: Tensor, label: usize) -> Result<Self> {
        let pair_id = pair_id.into();
        let sample = Self { source: pair_id.clone(), pair_id, left_eye, right_eye, label };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.left_eye.shape() != self.right_eye.shape() {
            return Err(Error::Input(format!(
                "pair `{}`: left {} and right {} differ",
                self.pair_id,
                self.left_eye.shape(),
                self.right_eye.shape()
            )));
        }
        if self.left_eye.shape().batch != 1 {
            return Err(Error::Input(format!("pair `{}`: expected single images", self.pair_id)));
        }
        if self.label > 1 {
            return Err(Error::Input(format!("pair `{}`: label {} is not 0 or 1", self.pair_id, self.label)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Eye {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Left,
    Right,
}

/// Where a stream tensor came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Origin {
    pub pair_id: String,
    pub eye: Eye,
    /// `None` for whole images.
    pub field: Option<Field>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub image: Tensor,
    pub label: usize,
    pub origin: Origin,
}

/// Per-hemisphere training samples. Index 0 receives the left visual fields
/// (or the left eye, or the single stream).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStreams {
    pub mode: RoutingMode,
    pub hemispheres: Vec<Vec<StreamItem>>,
}

/// `(ceil(w/2), floor(w/2))`.
pub fn field_widths(width: usize) -> (usize, usize) {
    (width.div_ceil(2), width / 2)
}

/// Left and right column halves of an image.
pub fn split_visual_fields(image: &Tensor) -> Result<(Tensor, Tensor)> {
    let w = image.shape().width;
    if w < 2 {
        return Err(Error::Input(format!("cannot split an image of width {w} into visual fields")));
    }
    let (left, _) = field_widths(w);
    Ok((image.slice_width(0, left)?, image.slice_width(left, w)?))
}

/// Hemisphere network specs for `mode`, derived from a base spec whose input
/// is the whole eye image.
pub fn hemisphere_specs(base: &ArchitectureSpec, mode: RoutingMode) -> Result<Vec<ArchitectureSpec>> {
    let (h, w) = (base.input.height, base.input.width);
    let named = |spec: ArchitectureSpec, side: &str| ArchitectureSpec {
        name: format!("{}/{}-{side}", base.name, mode.name()),
        ..spec
    };
    Ok(match mode {
        RoutingMode::Mono => vec![named(base.clone(), "single")],
        RoutingMode::Achiasma => vec![named(base.clone(), "left"), named(base.clone(), "right")],
        RoutingMode::Chiasma | RoutingMode::MonoChiasma => {
            if w < 2 {
                return Err(Error::Input(format!("input width {w} cannot be split into fields")));
            }
            let (lw, rw) = field_widths(w);
            vec![named(base.with_input(h, lw)?, "left"), named(base.with_input(h, rw)?, "right")]
        }
    })
}

fn check_consistent(samples: &[StereoSample]) -> Result<()> {
    let first = samples.first().ok_or_else(|| Error::Input("no stereo samples".into()))?;
    for s in samples {
        s.validate()?;
        if s.left_eye.shape() != first.left_eye.shape() {
            return Err(Error::Input(format!(
                "pair `{}` has shape {}, expected {}",
                s.pair_id,
                s.left_eye.shape(),
                first.left_eye.shape()
            )));
        }
    }
    Ok(())
}

/// Route every pair into per-hemisphere training samples. Order is stable:
/// pairs in input order, left eye before right eye.
pub fn build_training_streams(samples: &[StereoSample], mode: RoutingMode) -> Result<TrainingStreams> {
    check_consistent(samples)?;
    let mut hemispheres = vec![Vec::new(); mode.hemispheres()];
    let item = |image: Tensor, s: &StereoSample, eye, field| StreamItem {
        image,
        label: s.label,
        origin: Origin { pair_id: s.pair_id.clone(), eye, field },
    };
    for s in samples {
        let eyes = [(Eye::Left, &s.left_eye), (Eye::Right, &s.right_eye)];
        match mode {
            RoutingMode::Mono => {
                for (eye, img) in eyes {
                    hemispheres[0].push(item(img.clone(), s, eye, None));
                }
            }
            RoutingMode::Achiasma => {
                for (h, (eye, img)) in eyes.into_iter().enumerate() {
                    hemispheres[h].push(item(img.clone(), s, eye, None));
                }
            }
            RoutingMode::Chiasma => {
                for (eye, img) in eyes {
                    let (lf, rf) = split_visual_fields(img)?;
                    hemispheres[0].push(item(lf, s, eye, Some(Field::Left)));
                    hemispheres[1].push(item(rf, s, eye, Some(Field::Right)));
                }
            }
            RoutingMode::MonoChiasma => {
                let (lf, rf) = split_visual_fields(&s.left_eye)?;
                hemispheres[0].push(item(lf, s, Eye::Left, Some(Field::Left)));
                hemispheres[1].push(item(rf, s, Eye::Left, Some(Field::Right)));
            }
        }
    }
    Ok(TrainingStreams { mode, hemispheres })
}

/// One SVM sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledFeatures {
    pub vector: Vec<f64>,
    /// Pair id, suffixed with `/left` or `/right` when the sample is a single
    /// eye image.
    pub source: String,
    pub label: usize,
}

/// Trained hemisphere networks for one routing mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedModel {
    pub mode: RoutingMode,
    pub nets: Vec<Network>,
    pub final_losses: Vec<f64>,
}

fn check_nets(mode: RoutingMode, nets: &[Network]) -> Result<()> {
    if nets.len() != mode.hemispheres() {
        return Err(Error::State(format!(
            "mode {mode} needs {} hemisphere network(s), got {}",
            mode.hemispheres(),
            nets.len()
        )));
    }
    Ok(())
}

fn concat_features(left: Vec<f64>, right: Vec<f64>) -> Vec<f64> {
    let mut v = left;
    v.extend(right);
    v
}

fn field_features(image: &Tensor, nets: &[Network]) -> Result<Vec<f64>> {
    let (lf, rf) = split_visual_fields(image)?;
    Ok(concat_features(nets[0].extract_features(&lf)?, nets[1].extract_features(&rf)?))
}

/// Feature vectors for one pair under `mode`.
pub fn assemble_features(sample: &StereoSample, mode: RoutingMode, nets: &[Network]) -> Result<Vec<AssembledFeatures>> {
    check_nets(mode, nets)?;
    let per_eye = |vector: Vec<f64>, eye: &str| AssembledFeatures {
        vector,
        source: format!("{}/{eye}", sample.pair_id),
        label: sample.label,
    };
    Ok(match mode {
        RoutingMode::Mono => vec![
            per_eye(nets[0].extract_features(&sample.left_eye)?, "left"),
            per_eye(nets[0].extract_features(&sample.right_eye)?, "right"),
        ],
        RoutingMode::Chiasma => vec![
            per_eye(field_features(&sample.left_eye, nets)?, "left"),
            per_eye(field_features(&sample.right_eye, nets)?, "right"),
        ],
        RoutingMode::Achiasma => vec![AssembledFeatures {
            vector: concat_features(
                nets[0].extract_features(&sample.left_eye)?,
                nets[1].extract_features(&sample.right_eye)?,
            ),
            source: sample.pair_id.clone(),
            label: sample.label,
        }],
        RoutingMode::MonoChiasma => vec![per_eye(field_features(&sample.left_eye, nets)?, "left")],
    })
}

impl RoutedModel {
    /// Features for every sample, in sample order (computed in parallel).
    pub fn assemble_all(&self, samples: &[StereoSample]) -> Result<Vec<AssembledFeatures>> {
        let per_pair = par::map(samples, |s| assemble_features(s, self.mode, &self.nets));
        let mut out = Vec::new();
        for v in per_pair {
            out.extend(v?);
        }
        Ok(out)
    }
}

/// Train the hemisphere networks of `mode`. `spec` describes the whole eye
/// image; field modes derive half-width hemisphere specs from it. Hemisphere
/// `i` initializes from `derive(seed, 2i)` and shuffles with
/// `derive(seed, 2i + 1)`, so results do not depend on scheduling.
pub fn train_routed(
    samples: &[StereoSample],
    mode: RoutingMode,
    spec: &ArchitectureSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<RoutedModel> {
    cfg.validate()?;
    let streams = build_training_streams(samples, mode)?;
    let image = samples[0].left_eye.shape();
    if (image.height, image.width, image.channels) != (spec.input.height, spec.input.width, spec.input.channels) {
        return Err(Error::Shape(format!(
            "spec `{}` expects {}x{}x{} images, samples are {}x{}x{}",
            spec.name,
            spec.input.height,
            spec.input.width,
            spec.input.channels,
            image.height,
            image.width,
            image.channels
        )));
    }
    let specs = hemisphere_specs(spec, mode)?;
    let jobs: Vec<(usize, ArchitectureSpec)> = specs.into_iter().enumerate().collect();
    let results = par::map(&jobs, |(h, hspec)| -> Result<(Network, f64)> {
        let h = *h as u64;
        let mut init = Rng::derived(seed, 2 * h);
        let mut order = Rng::derived(seed, 2 * h + 1);
        let mut net = Network::new(hspec.clone(), &mut init, cfg.weight_init_stddev)?;
        let data: Vec<(Tensor, usize)> =
            streams.hemispheres[h as usize].iter().map(|it| (it.image.clone(), it.label)).collect();
        let outcome = train(&mut net, &data, cfg, &mut order)?;
        Ok((net, outcome.final_loss()))
    });
    let mut nets = Vec::with_capacity(results.len());
    let mut final_losses = Vec::with_capacity(results.len());
    for r in results {
        let (net, loss) = r?;
        nets.push(net);
        final_losses.push(loss);
    }
    Ok(RoutedModel { mode, nets, final_losses })
}
