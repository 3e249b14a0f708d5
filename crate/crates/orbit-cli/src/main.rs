//! `orbit` — train, evaluate, and verify structured-prediction models with
//! smoothed surrogate losses.
//!
//! Every subcommand except `ingest-mnist` and `report` is driven by a JSON
//! experiment configuration (see the `config` module). Runs write their
//! fully resolved configuration next to their outputs, and identical
//! configurations produce byte-identical artifacts.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 verification failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

/// Errors surfaced to the user, partitioned by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit 1).
    Usage(String),
    /// Missing or malformed data and artifacts (exit 2).
    Data(String),
    /// The verification battery reported failing checks (exit 3).
    VerifyFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::VerifyFailed(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => f.write_str(msg),
            CliError::VerifyFailed(n) => write!(f, "{n} verification check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<orbit::Error> for CliError {
    fn from(e: orbit::Error) -> Self {
        use orbit::Error as E;
        match &e {
            // Errors caused by the configuration the user wrote.
            E::Config(_)
            | E::ConfigUnstable(_)
            | E::InvalidGamma(_)
            | E::ZeroEpsilon
            | E::DimMismatch { .. }
            | E::NonFinite(_)
            | E::UnsupportedTask(_) => CliError::Usage(e.to_string()),
            // Everything else is a problem with data or artifacts.
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "orbit",
    version,
    about = "Structured prediction with smoothed surrogate losses",
    long_about = "Train linear structured-prediction models with the orbit update rule and its \
                  comparison rules, evaluate them under task costs, and run the numerical \
                  verification battery. Commands are driven by a JSON experiment configuration; \
                  each run writes its fully resolved configuration next to its outputs."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Convert raw IDX image/label files into PCA-projected CSV splits.
    #[command(name = "ingest-mnist")]
    IngestMnist(IngestArgs),
    /// Generate planted-signal dataset splits from the config's generator.
    Synth(ConfigArgs),
    /// Train a linear model with the configured update rule.
    Train(ConfigArgs),
    /// Evaluate a saved model on one dataset split.
    Eval(ConfigArgs),
    /// Run the numerical verification battery.
    Verify(ConfigArgs),
    /// Aggregate run artifacts into summary tables.
    Report(ReportArgs),
}

/// Flags shared by the config-driven subcommands.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the command's primary seed (generator seed for synth,
    /// shuffle seed for train, check seed for verify).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppress progress output on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// IDX file with the training images.
    #[arg(long, value_name = "PATH")]
    pub train_images: PathBuf,
    /// IDX file with the training labels.
    #[arg(long, value_name = "PATH")]
    pub train_labels: PathBuf,
    /// IDX file with the test images.
    #[arg(long, value_name = "PATH")]
    pub test_images: PathBuf,
    /// IDX file with the test labels.
    #[arg(long, value_name = "PATH")]
    pub test_labels: PathBuf,
    /// Principal components kept by the projection (fitted on the
    /// training split only).
    #[arg(long, value_name = "N", default_value_t = 100)]
    pub pca_dim: usize,
    /// Seed of the shuffle that carves the validation split off the
    /// training set.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub split_seed: u64,
    /// Override --split-seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Directory receiving the split CSVs and manifests.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Suppress progress output on stdout.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories to scan for eval.json, report.jsonl, and
    /// verdicts.jsonl artifacts.
    #[arg(value_name = "DIR")]
    pub roots: Vec<PathBuf>,
    /// Optional config whose output_dir supplies a default root and
    /// summary destination.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory receiving summary.txt and summary.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    pub quiet: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here; they are not failures.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::IngestMnist(args) => commands::cmd_ingest_mnist(args),
        Cmd::Synth(args) => with_config(args, "synth", commands::cmd_synth),
        Cmd::Train(args) => with_config(args, "train", commands::cmd_train),
        Cmd::Eval(args) => with_config(args, "eval", commands::cmd_eval),
        Cmd::Verify(args) => with_config(args, "verify", commands::cmd_verify),
        Cmd::Report(args) => commands::cmd_report(args),
    }
}

fn with_config(
    args: ConfigArgs,
    command: &str,
    f: fn(config::ExperimentConfig, bool) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let cfg = config::load_config(&args.config)?;
    let resolved = config::resolve(
        cfg,
        Overrides {
            seed: args.seed,
            out: args.out.as_deref(),
        },
        command,
    )?;
    f(resolved, args.quiet)
}
