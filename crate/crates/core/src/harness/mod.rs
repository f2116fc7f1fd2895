//! Repeated-split experiments over several routing modes.
//!
//! Every run draws one split from the master seed and then trains and scores
//! each mode on exactly that split, so modes are compared pairwise.

mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    augment_all, dataset_digest, load_and_resize, split, synthesize_dataset, AugmentConfig, DatasetManifest, SplitPlan,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::nn::{ArchitectureSpec, TrainConfig};
use crate::par;
use crate::rng::{derive_seed, tag_of};
use crate::routing::{train_routed, RoutedModel, RoutingMode, StereoSample};
use crate::svm::{self, Standardizer, SvmModel, SvmTrainConfig};

pub use report::{
    emit_report, summarize, EmittedFiles, ModeReport, RunRecord, RunReport, Summary, REPORT_SCHEMA_VERSION,
};

/// Where the stereo pairs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// `"synthetic"` or the path of a dataset manifest.
    pub source: String,
    /// Synthetic pairs per class.
    pub pairs_per_class: usize,
    /// Image size comes from the architecture spec; `height` and `width`
    /// here are overridden.
    pub synth: SynthConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { source: "synthetic".into(), pairs_per_class: 50, synth: SynthConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub modes: Vec<RoutingMode>,
    pub runs: usize,
    pub train_fraction: f64,
    pub master_seed: u64,
    /// `"paper"`, `"desk"` or the path of a TOML architecture file.
    pub spec: String,
    /// z-score SVM inputs with statistics of the training side.
    pub standardize_features: bool,
    /// Worker threads for runs and batches; 0 uses every core.
    pub workers: usize,
    pub train: TrainConfig,
    pub svm: SvmTrainConfig,
    pub augment: AugmentConfig,
    pub dataset: DatasetConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            modes: vec![RoutingMode::Mono, RoutingMode::Chiasma, RoutingMode::Achiasma],
            runs: 25,
            train_fraction: 0.6,
            master_seed: 0,
            spec: "desk".into(),
            standardize_features: true,
            workers: 0,
            train: TrainConfig { learning_rate: 0.01, ..TrainConfig::default() },
            svm: SvmTrainConfig { lambda: 0.1, ..SvmTrainConfig::default() },
            augment: AugmentConfig::none(),
            dataset: DatasetConfig::default(),
        }
    }
}

/// Master seed of the reference desk experiment.
pub const DESK_REFERENCE_SEED: u64 = 10;

impl ExperimentConfig {
    /// The reference desk-scale experiment: 50+50 synthetic pairs, desk
    /// architecture, five runs.
    pub fn desk() -> Self {
        Self { runs: 5, master_seed: DESK_REFERENCE_SEED, ..Self::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Structural checks that need no files.
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        let mut seen = self.modes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.modes.len() {
            return Err(Error::Config("modes must not repeat".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must be in (0, 1), got {}", self.train_fraction)));
        }
        if self.dataset.source == "synthetic" && self.dataset.pairs_per_class == 0 {
            return Err(Error::Config("pairs_per_class must be >= 1".into()));
        }
        self.train.validate()?;
        self.svm.validate()?;
        Ok(())
    }

    pub fn resolve_spec(&self) -> Result<ArchitectureSpec> {
        resolve_spec(&self.spec)
    }
}

/// A preset name or the path of a TOML architecture file.
pub fn resolve_spec(source: &str) -> Result<ArchitectureSpec> {
    match source {
        "paper" | "desk" => ArchitectureSpec::preset(source),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("spec file `{path}`: {e}")))?;
            ArchitectureSpec::from_toml_str(&text)
        }
    }
}

/// The corpus every run draws its splits from: synthesized or loaded,
/// then augmented once.
pub fn load_dataset(cfg: &ExperimentConfig, spec: &ArchitectureSpec) -> Result<Vec<StereoSample>> {
    let (h, w) = (spec.input.height, spec.input.width);
    let base = if cfg.dataset.source == "synthetic" {
        let synth = SynthConfig { height: h, width: w, ..cfg.dataset.synth.clone() };
        synthesize_dataset(cfg.dataset.pairs_per_class, &synth, derive_seed(cfg.master_seed, tag_of("synth")))?
    } else {
        let manifest = DatasetManifest::load(&PathBuf::from(&cfg.dataset.source))?;
        load_and_resize(&manifest, h, w)?
    };
    if cfg.augment.enabled_count() == 0 {
        return Ok(base);
    }
    cfg.augment.validate(w)?;
    let aug = AugmentConfig {
        seed: derive_seed(derive_seed(cfg.master_seed, tag_of("augment")), cfg.augment.seed),
        ..cfg.augment.clone()
    };
    augment_all(&base, &aug)
}

fn split_digest(train: &[StereoSample]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for s in train {
        h.update(s.pair_id.as_bytes());
        h.update([0u8]);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct ModeOutcome {
    accuracy: Option<f64>,
    failure: Option<String>,
    seconds: f64,
}

/// Networks and SVM trained for one mode on one run's split.
#[derive(Debug, Clone)]
pub struct TrainedMode {
    pub model: RoutedModel,
    /// Works on raw assembled features (any standardization is folded in).
    pub svm: SvmModel,
    pub test_accuracy: f64,
}

/// Train `mode` on `train`, fit the SVM head and score it on `test`.
pub fn train_mode(
    mode: RoutingMode,
    train: &[StereoSample],
    test: &[StereoSample],
    spec: &ArchitectureSpec,
    cfg: &ExperimentConfig,
    run_seed: u64,
) -> Result<TrainedMode> {
    let model = train_routed(train, mode, spec, &cfg.train, derive_seed(run_seed, tag_of("init")))?;
    let mut train_f = model.assemble_all(train)?;
    let test_f = model.assemble_all(test)?;
    let z = if cfg.standardize_features {
        let z = Standardizer::fit(&train_f.iter().map(|f| f.vector.as_slice()).collect::<Vec<_>>())?;
        for f in &mut train_f {
            f.vector = z.apply(&f.vector);
        }
        Some(z)
    } else {
        None
    };
    let svm_cfg =
        SvmTrainConfig { seed: derive_seed(derive_seed(run_seed, tag_of("svm")), cfg.svm.seed), ..cfg.svm.clone() };
    let head = svm::svm_train(&train_f, &svm_cfg)?;
    let head = match &z {
        Some(z) => z.fold(&head),
        None => head,
    };
    let test_accuracy = svm::accuracy(&head, &test_f)?;
    Ok(TrainedMode { model, svm: head, test_accuracy })
}

/// Seed of run `run` and its train/test split.
pub fn run_split(
    data: &[StereoSample],
    cfg: &ExperimentConfig,
    run: usize,
) -> Result<(u64, Vec<StereoSample>, Vec<StereoSample>)> {
    let run_seed = derive_seed(cfg.master_seed, run as u64);
    let plan = SplitPlan { train_fraction: cfg.train_fraction, seed: derive_seed(run_seed, tag_of("split")) };
    let (train, test) = split(data, &plan)?;
    Ok((run_seed, train, test))
}

fn run_one(
    run: usize,
    data: &[StereoSample],
    spec: &ArchitectureSpec,
    cfg: &ExperimentConfig,
) -> Result<(String, Vec<ModeOutcome>)> {
    let (run_seed, train, test) = run_split(data, cfg, run)?;
    let mut outcomes = Vec::with_capacity(cfg.modes.len());
    for &mode in &cfg.modes {
        let t0 = Instant::now();
        let scored = train_mode(mode, &train, &test, spec, cfg, run_seed).map(|t| t.test_accuracy);
        let seconds = t0.elapsed().as_secs_f64();
        outcomes.push(match scored {
            Ok(acc) => ModeOutcome { accuracy: Some(acc), failure: None, seconds },
            Err(Error::Training(msg)) => {
                log::warn!("run {run} mode {mode}: {msg}");
                ModeOutcome { accuracy: None, failure: Some(msg), seconds }
            }
            Err(e) => return Err(e),
        });
        log::info!("run {run} mode {mode} done in {seconds:.1}s");
    }
    Ok((split_digest(&train), outcomes))
}

/// Run the whole protocol. Runs execute in parallel up to `cfg.workers`;
/// the report does not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let spec = cfg.resolve_spec()?;
    let started = Instant::now();
    par::with_workers(cfg.workers, || {
        let data = load_dataset(cfg, &spec)?;
        let digest = dataset_digest(&data);
        let results = par::map_range(cfg.runs, |run| run_one(run, &data, &spec, cfg));
        let mut split_digests = Vec::with_capacity(cfg.runs);
        let mut modes: Vec<ModeReport> = cfg.modes.iter().map(|&m| ModeReport::new(m)).collect();
        for (run, r) in results.into_iter().enumerate() {
            let (sd, outcomes) = r?;
            split_digests.push(sd);
            for (m, o) in modes.iter_mut().zip(outcomes) {
                m.push(RunRecord { run, accuracy: o.accuracy, failure: o.failure, seconds: o.seconds });
            }
        }
        for m in &mut modes {
            m.finish()?;
        }
        Ok(RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config: cfg.clone(),
            spec_digest: format!("{:016x}", spec.digest()),
            dataset_digest: digest,
            dataset_size: data.len(),
            split_digests,
            modes,
            total_seconds: started.elapsed().as_secs_f64(),
        })
    })
}
