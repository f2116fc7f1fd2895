//! `bcnn`: datasets, training, gradient checks and repeated-split
//! experiments for binocular CNNs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use bcnn::routing::RoutingMode;
use clap::{Args, Parser, Subcommand};

/// Exit codes. Stable across versions.
pub mod exit {
    pub const USAGE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const TRAINING: u8 = 4;
    pub const OUTPUT: u8 = 5;
}

#[derive(Debug, Parser)]
#[command(
    name = "bcnn",
    version,
    about = "Binocular CNN experiments on stereo image pairs",
    after_help = "Exit codes: 0 success, 1 usage, 2 config, 3 data, 4 training, 5 output.\n\
                  Every successful run writes <out>/resolved-config.toml, which replays it via --config."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Comma-separated routing modes: mono, bcnn1, bcnn2, mono-chiasma.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    modes: Option<Vec<RoutingMode>>,
    /// Number of independent runs.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "BCNN_OUT", default_value = "bcnn-out")]
    out: PathBuf,
    /// Architecture: paper, desk, or a TOML spec file.
    #[arg(long, global = true, value_name = "paper|desk|PATH")]
    spec: Option<String>,
    /// Dataset: synthetic, or a manifest file.
    #[arg(long, global = true, value_name = "synthetic|PATH")]
    dataset: Option<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic stereo dataset (images and manifest).
    Synth {
        /// Pairs per class.
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long, default_value = "png", value_parser = ["png", "ppm"])]
        format: String,
    },
    /// Load a manifest, resize to the spec's input size and write a copy.
    Ingest {
        #[arg(long, default_value = "png", value_parser = ["png", "ppm"])]
        format: String,
    },
    /// Write the augmented dataset with a provenance sidecar.
    Augment {
        #[arg(long, default_value = "png", value_parser = ["png", "ppm"])]
        format: String,
    },
    /// Train the first configured mode on one run's split and save a checkpoint.
    Train {
        /// Which run's split to use.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Compare analytic and finite-difference gradients of the spec's network.
    Gradcheck {
        /// Random inputs to check.
        #[arg(long, default_value_t = 3)]
        inputs: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Entries sampled per parameter tensor (0 = all).
        #[arg(long, default_value_t = 16)]
        per_tensor: usize,
    },
    /// Run the repeated-split protocol and write report files.
    Experiment,
    /// Print the summary table of a saved report and rewrite its CSV files.
    Report {
        /// Report file (defaults to <out>/report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
