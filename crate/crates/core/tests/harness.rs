use bcnn::harness::{emit_report, run_experiment, summarize, DatasetConfig, ExperimentConfig, RunReport};
use bcnn::nn::TrainConfig;
use bcnn::routing::RoutingMode;

fn tiny(modes: Vec<RoutingMode>, runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        modes,
        runs,
        workers: 1,
        train: TrainConfig { learning_rate: 0.01, epochs: 1, ..TrainConfig::default() },
        dataset: DatasetConfig { pairs_per_class: 5, ..DatasetConfig::default() },
        ..ExperimentConfig::default()
    }
}

/// Welford's running mean and variance.
fn welford(xs: &[f64]) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    (mean, (m2 / (xs.len() - 1) as f64).sqrt())
}

#[test]
fn single_run_summary_is_degenerate() {
    let report = run_experiment(&tiny(vec![RoutingMode::Mono], 1)).unwrap();
    let mono = report.mode(RoutingMode::Mono).unwrap();
    assert_eq!(mono.accuracies.len(), 1);
    let s = mono.summary.unwrap();
    assert_eq!((s.min, s.max, s.mean, s.stdev), (mono.accuracies[0], mono.accuracies[0], mono.accuracies[0], 0.0));
}

#[test]
fn emitted_files_have_expected_rows_and_round_trip() {
    let modes = vec![RoutingMode::Mono, RoutingMode::Chiasma, RoutingMode::Achiasma];
    let report = run_experiment(&tiny(modes, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();

    let summary = std::fs::read_to_string(&files.summary).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3);
    let plot = std::fs::read_to_string(&files.plot).unwrap();
    assert_eq!(plot.lines().count(), 1 + 2 * 3);
    assert_eq!(plot.lines().next(), Some("run,mode,accuracy"));

    let back = RunReport::load(&files.report).unwrap();
    assert_eq!(back, report);
    for m in &report.modes {
        assert_eq!(m.accuracies.len() + m.failed, 2);
        assert_eq!(m.runs.len(), 2);
    }
    // every mode of a run sees the same split
    assert_eq!(report.split_digests.len(), 2);
}

#[test]
fn reports_are_deterministic() {
    let cfg = tiny(vec![RoutingMode::Mono, RoutingMode::Achiasma], 2);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.canonical_json(), b.canonical_json());
    let c = run_experiment(&ExperimentConfig { master_seed: 99, ..cfg }).unwrap();
    assert_ne!(a.split_digests, c.split_digests);
}

#[test]
fn reference_table_row_reproduces() {
    let accs = [
        0.84375, 0.925, 0.9255, 0.9328, 0.9353, 0.9366, 0.9378, 0.9379, 0.9392, 0.9416, 0.9456, 0.9464, 0.9467, 0.9471,
        0.9495, 0.9515, 0.9561, 0.9573, 0.9577, 0.9578, 0.959, 0.9667, 0.9674, 0.9679, 0.975,
    ];
    let s = summarize(&accs).unwrap();
    let (mean, stdev) = welford(&accs);
    assert!((s.mean - mean).abs() < 1e-12);
    assert!((s.stdev - stdev).abs() < 1e-12);
    assert_eq!(s.cells(), ["84.38", "97.50", "94.43", "0.0248"].map(String::from));
}

#[test]
fn invalid_configs_are_rejected() {
    let zero_runs = ExperimentConfig { runs: 0, ..ExperimentConfig::default() };
    assert!(zero_runs.validate().is_err());
    assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    let text = ExperimentConfig::desk().to_toml_string();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), ExperimentConfig::desk());
}

#[test]
fn shipped_desk_config_matches_preset() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::desk());
}
