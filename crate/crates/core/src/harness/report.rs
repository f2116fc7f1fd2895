use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::routing::RoutingMode;
use crate::svm::format_percent;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Accuracy statistics as fractions; `stdev` uses the n - 1 denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub stdev: f64,
}

impl Summary {
    /// `min (%), max (%), mean (%), stdev` display cells.
    pub fn cells(&self) -> [String; 4] {
        [format_percent(self.min), format_percent(self.max), format_percent(self.mean), format!("{:.4}", self.stdev)]
    }
}

pub fn summarize(accuracies: &[f64]) -> Result<Summary> {
    if accuracies.is_empty() {
        return Err(Error::Input("cannot summarize an empty accuracy list".into()));
    }
    let n = accuracies.len() as f64;
    // sort first so the result does not depend on list order
    let mut xs = accuracies.to_vec();
    xs.sort_by(f64::total_cmp);
    let mean = xs.iter().sum::<f64>() / n;
    let stdev =
        if xs.len() < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    Ok(Summary { min: xs[0], max: xs[xs.len() - 1], mean: mean.clamp(xs[0], xs[xs.len() - 1]), stdev })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub accuracy: Option<f64>,
    pub failure: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: RoutingMode,
    /// Accuracies of the successful runs, in run order.
    pub accuracies: Vec<f64>,
    pub failed: usize,
    /// `None` when every run failed.
    pub summary: Option<Summary>,
    pub runs: Vec<RunRecord>,
}

impl ModeReport {
    pub(crate) fn new(mode: RoutingMode) -> Self {
        Self { mode, accuracies: Vec::new(), failed: 0, summary: None, runs: Vec::new() }
    }

    pub(crate) fn push(&mut self, r: RunRecord) {
        match r.accuracy {
            Some(a) => self.accuracies.push(a),
            None => self.failed += 1,
        }
        self.runs.push(r);
    }

    pub(crate) fn finish(&mut self) -> Result<()> {
        self.summary = if self.accuracies.is_empty() { None } else { Some(summarize(&self.accuracies)?) };
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub spec_digest: String,
    pub dataset_digest: String,
    pub dataset_size: usize,
    /// Digest of each run's training pair ids.
    pub split_digests: Vec<String>,
    pub modes: Vec<ModeReport>,
    pub total_seconds: f64,
}

impl RunReport {
    pub fn mode(&self, mode: RoutingMode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// The report with wall-clock times and the worker count cleared, as
    /// pretty JSON. Equal experiments give equal bytes.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.total_seconds = 0.0;
        r.config.workers = 0;
        for m in &mut r.modes {
            for run in &mut m.runs {
                run.seconds = 0.0;
            }
        }
        serde_json::to_string_pretty(&r).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Input(format!("report: {e}")))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Input(format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ingestion(path, e))?;
        Self::from_json(&text)
    }

    /// `mode,min (%),max (%),mean (%),stdev`, one row per mode. Modes
    /// without a successful run show empty cells.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("mode,min (%),max (%),mean (%),stdev\n");
        for m in &self.modes {
            let cells = m.summary.map(|s| s.cells().join(",")).unwrap_or_else(|| ",,,".into());
            writeln!(out, "{},{cells}", m.mode).expect("string write");
        }
        out
    }

    /// `run,mode,accuracy` with one row per run and mode; failed runs leave
    /// the accuracy empty.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("run,mode,accuracy\n");
        let runs = self.modes.iter().map(|m| m.runs.len()).max().unwrap_or(0);
        for i in 0..runs {
            for m in &self.modes {
                if let Some(r) = m.runs.get(i) {
                    let acc = r.accuracy.map(|a| format!("{a}")).unwrap_or_default();
                    writeln!(out, "{},{},{acc}", r.run, m.mode).expect("string write");
                }
            }
        }
        out
    }

    /// Aligned text table for terminals.
    pub fn table(&self) -> String {
        let mut out =
            format!("{:<14}{:>9}{:>9}{:>10}{:>9}{:>8}\n", "mode", "min (%)", "max (%)", "mean (%)", "stdev", "failed");
        for m in &self.modes {
            let [a, b, c, d] =
                m.summary.map(|s| s.cells()).unwrap_or_else(|| ["-".into(), "-".into(), "-".into(), "-".into()]);
            writeln!(out, "{:<14}{a:>9}{b:>9}{c:>10}{d:>9}{:>8}", m.mode.name(), m.failed).expect("string write");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub report: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

/// Write `report.json`, `summary.csv` and `runs.csv` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<EmittedFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::output(dir, e))?;
    let files =
        EmittedFiles { report: dir.join("report.json"), summary: dir.join("summary.csv"), plot: dir.join("runs.csv") };
    for (path, body) in
        [(&files.report, report.to_json()), (&files.summary, report.summary_csv()), (&files.plot, report.plot_csv())]
    {
        std::fs::write(path, body).map_err(|e| Error::output(path, e))?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_examples() {
        assert_eq!(summarize(&[0.5, 0.5, 0.5]).unwrap(), Summary { min: 0.5, max: 0.5, mean: 0.5, stdev: 0.0 });
        let s = summarize(&[0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert!((s.stdev - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(summarize(&[0.7]).unwrap().stdev, 0.0);
        assert!(matches!(summarize(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn cells_format() {
        let s = Summary { min: 0.84375, max: 0.975, mean: 0.9443, stdev: 0.02481 };
        assert_eq!(s.cells(), ["84.38", "97.50", "94.43", "0.0248"].map(String::from));
    }
}
