use std::path::{Path, PathBuf};

use bcnn::checkpoint::Checkpoint;
use bcnn::data::synth::CLASS_NAMES;
use bcnn::data::{synthesize_dataset, write_dataset, AugmentConfig, DatasetManifest, SynthConfig};
use bcnn::harness::{
    self, emit_report, resolve_spec, run_experiment, run_split, train_mode, ExperimentConfig, RunReport,
};
use bcnn::nn::{gradient_check, GradCheckOptions, Network};
use bcnn::rng::{derive_seed, tag_of, Rng};
use bcnn::{Error, Result, Shape, Tensor};
use serde::Serialize;

use crate::{exit, Command, Common};

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Spec { .. } => exit::CONFIG,
        Error::Ingestion { .. } | Error::Format { .. } | Error::Split(_) | Error::Input(_) => exit::DATA,
        Error::Output { .. } => exit::OUTPUT,
        Error::Training(_) | Error::Shape(_) | Error::Parameter(_) | Error::Bounds(_) | Error::State(_) => {
            exit::TRAINING
        }
    }
}

/// Config file (or defaults) with command-line overrides applied.
fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &common.modes {
        cfg.modes = m.clone();
    }
    if let Some(r) = common.runs {
        cfg.runs = r;
    }
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(s) = &common.spec {
        cfg.spec = s.clone();
    }
    if let Some(d) = &common.dataset {
        cfg.dataset.source = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Output { path: dir.to_path_buf(), reason: e.to_string() })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::Output { path: path.to_path_buf(), reason: e.to_string() })
}

fn echo_config(cfg: &ExperimentConfig, out: &Path, command: &str) -> Result<()> {
    create_dir(out)?;
    let path = out.join("resolved-config.toml");
    let body = format!("# resolved configuration of `bcnn {command}`\n{}", cfg.to_toml_string());
    write_file(&path, &body)?;
    log::info!("resolved config:\n{body}");
    println!("config: {}", path.display());
    Ok(())
}

fn classes() -> Vec<String> {
    CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn dispatch(command: Command, common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    let out = common.out.clone();
    let name = match &command {
        Command::Synth { .. } => "synth",
        Command::Ingest { .. } => "ingest",
        Command::Augment { .. } => "augment",
        Command::Train { .. } => "train",
        Command::Gradcheck { .. } => "gradcheck",
        Command::Experiment => "experiment",
        Command::Report { .. } => "report",
    };
    let mut echo = cfg.clone();
    match command {
        Command::Synth { pairs, format } => synth(&cfg, &out, pairs, &format)?,
        Command::Ingest { format } => ingest(&cfg, &out, &format)?,
        Command::Augment { format } => augment(&cfg, &out, &format)?,
        Command::Train { run } => train(&cfg, &out, run)?,
        Command::Gradcheck { inputs, tolerance, per_tensor } => gradcheck(&cfg, inputs, tolerance, per_tensor)?,
        Command::Experiment => experiment(&cfg, &out)?,
        Command::Report { report } => echo = report_cmd(&out, report)?,
    }
    echo_config(&echo, &out, name)
}

fn synth(cfg: &ExperimentConfig, out: &Path, pairs: Option<usize>, format: &str) -> Result<()> {
    let spec = cfg.resolve_spec()?;
    let synth = SynthConfig { height: spec.input.height, width: spec.input.width, ..cfg.dataset.synth.clone() };
    let n = pairs.unwrap_or(cfg.dataset.pairs_per_class);
    let samples = synthesize_dataset(n, &synth, derive_seed(cfg.master_seed, tag_of("synth")))?;
    let dir = out.join("dataset");
    write_dataset(&samples, &classes(), &dir, format)?;
    println!("wrote {} pairs to {}", samples.len(), dir.join("manifest.toml").display());
    Ok(())
}

fn ingest(cfg: &ExperimentConfig, out: &Path, format: &str) -> Result<()> {
    if cfg.dataset.source == "synthetic" {
        return Err(Error::Config("ingest needs --dataset <manifest>".into()));
    }
    let spec = cfg.resolve_spec()?;
    let manifest = DatasetManifest::load(Path::new(&cfg.dataset.source))?;
    let samples = bcnn::data::load_and_resize(&manifest, spec.input.height, spec.input.width)?;
    let dir = out.join("ingested");
    write_dataset(&samples, &manifest.classes, &dir, format)?;
    println!(
        "ingested {} pairs at {}x{} into {} (digest {})",
        samples.len(),
        spec.input.height,
        spec.input.width,
        dir.display(),
        bcnn::data::dataset_digest(&samples)
    );
    Ok(())
}

#[derive(Serialize)]
struct Provenance<'a> {
    source: &'a str,
    master_seed: u64,
    pairs: usize,
    augment: &'a AugmentConfig,
}

fn augment(cfg: &ExperimentConfig, out: &Path, format: &str) -> Result<()> {
    let spec = cfg.resolve_spec()?;
    let mut cfg = cfg.clone();
    if cfg.augment.enabled_count() == 0 {
        cfg.augment = AugmentConfig { seed: cfg.augment.seed, ..AugmentConfig::default() };
    }
    let samples = harness::load_dataset(&cfg, &spec)?;
    let dir = out.join("augmented");
    let classes = if cfg.dataset.source == "synthetic" {
        classes()
    } else {
        DatasetManifest::load(Path::new(&cfg.dataset.source))?.classes
    };
    write_dataset(&samples, &classes, &dir, format)?;
    let prov = Provenance {
        source: &cfg.dataset.source,
        master_seed: cfg.master_seed,
        pairs: samples.len(),
        augment: &cfg.augment,
    };
    let text = toml::to_string(&prov).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&dir.join("provenance.toml"), &text)?;
    println!("wrote {} pairs to {}", samples.len(), dir.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig, out: &Path, run: usize) -> Result<()> {
    let spec = cfg.resolve_spec()?;
    let mode = cfg.modes[0];
    let data = bcnn::par::with_workers(cfg.workers, || harness::load_dataset(cfg, &spec))?;
    let (run_seed, train, test) = run_split(&data, cfg, run)?;
    let trained = bcnn::par::with_workers(cfg.workers, || train_mode(mode, &train, &test, &spec, cfg, run_seed))?;
    create_dir(out)?;
    let path = out.join(format!("{}.ckpt", mode.name()));
    Checkpoint { mode, nets: trained.model.nets, svm: Some(trained.svm) }.save(&path)?;
    println!(
        "{mode}: final losses {:?}, test accuracy {}%",
        trained.model.final_losses,
        bcnn::svm::format_percent(trained.test_accuracy)
    );
    println!("checkpoint: {}", path.display());
    Ok(())
}

fn gradcheck(cfg: &ExperimentConfig, inputs: usize, tolerance: f64, per_tensor: usize) -> Result<()> {
    if inputs == 0 {
        return Err(Error::Config("--inputs must be >= 1".into()));
    }
    let spec = resolve_spec(&cfg.spec)?;
    let mut rng = Rng::derived(cfg.master_seed, tag_of("gradcheck"));
    let net = Network::new(spec.clone(), &mut rng, cfg.train.weight_init_stddev)?;
    let shape = Shape::image(spec.input.height, spec.input.width, spec.input.channels)?;
    let opts = GradCheckOptions {
        tolerance,
        max_per_tensor: (per_tensor > 0).then_some(per_tensor),
        seed: derive_seed(cfg.master_seed, tag_of("gradcheck-entries")),
        ..GradCheckOptions::default()
    };
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped, mut unresolved) = (0, 0, 0);
    for i in 0..inputs {
        let x = Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.uniform()).collect())?;
        let report = gradient_check(&net, &x, i % spec.num_classes, &opts)?;
        checked += report.checked;
        skipped += report.skipped;
        unresolved += report.unresolved;
        worst = worst.max(report.worst_rel_error());
        if let Some(o) = report.worst.as_ref().filter(|_| !report.passed()) {
            return Err(Error::Training(format!(
                "gradient check failed on input {i}: {}[{}] analytic {:e} numeric {:e} (relative error {:e})",
                o.tensor, o.index, o.analytic, o.numeric, o.rel_error
            )));
        }
    }
    println!(
        "spec {}: checked {checked} entries on {inputs} inputs ({skipped} skipped near kinks, {unresolved} below finite-difference resolution)",
        spec.name
    );
    println!("worst relative error: {worst:.3e} (tolerance {tolerance:e})");
    Ok(())
}

fn experiment(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let report = run_experiment(cfg)?;
    let files = emit_report(&report, out)?;
    print!("{}", report.table());
    println!("report: {}", files.report.display());
    println!("summary: {}", files.summary.display());
    println!("runs: {}", files.plot.display());
    Ok(())
}

/// Returns the configuration the report was produced with.
fn report_cmd(out: &Path, report: Option<PathBuf>) -> Result<ExperimentConfig> {
    let path = report.unwrap_or_else(|| out.join("report.json"));
    let report = RunReport::load(&path)?;
    let files = emit_report(&report, out)?;
    print!("{}", report.table());
    println!("summary: {}", files.summary.display());
    Ok(report.config)
}
