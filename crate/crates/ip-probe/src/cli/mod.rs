//! Command-line driver gluing the pipeline together:
//! pair -> collect -> score -> test, plus the composed `audit` command
//! and the mock-world `calibrate` command.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 backend
//! failure, 3 degenerate statistics (too few pairs, all-tied scores).

pub mod calibrate;
pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::backends::BackendError;
use crate::core::TailMode;
use crate::stats::StatsError;

use config::{OutPaths, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Validation(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("degenerate statistics: {0}")]
    Degenerate(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Backend(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }

    /// Map a stats error, routing the degenerate cases to exit code 3.
    pub fn from_stats(context: String, e: &StatsError) -> Self {
        match e {
            StatsError::DegenerateSample { .. } | StatsError::AllTies { .. } => {
                CliError::Degenerate(context)
            }
            _ => CliError::Validation(context),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(message) => CliError::Config(message),
            BackendError::EmptySample | BackendError::InvalidSample(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Backend(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ip-probe",
    version,
    about = "Detect implicit personalization in black-box text generators \
             with paired statistical tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TailArg {
    Inclusive,
    Strict,
}

impl From<TailArg> for TailMode {
    fn from(t: TailArg) -> TailMode {
        match t {
            TailArg::Inclusive => TailMode::Inclusive,
            TailArg::Strict => TailMode::Strict,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Root seed override; all stage randomness derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Significance level override.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sign-test similarity threshold override.
    #[arg(long)]
    pub m0: Option<f64>,
    /// Monte Carlo permutation count override.
    #[arg(long)]
    pub permutations: Option<u64>,
    /// Which binomial tail the sign test reports.
    #[arg(long, value_enum)]
    pub tail: Option<TailArg>,
    /// Deterministically subsample the pool to this many items.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Abort on the first failed item instead of dropping it.
    #[arg(long)]
    pub fail_fast: bool,
    /// Output directory override.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            alpha: self.alpha,
            m0: self.m0,
            permutations: self.permutations,
            tail: self.tail.map(TailMode::from),
            subsample: self.subsample,
            fail_fast: self.fail_fast,
            out: self.out.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build paired inputs from the source pool via style transfer.
    Pair(CommonArgs),
    /// Query the backend for both sides of every paired input.
    Collect {
        #[command(flatten)]
        common: CommonArgs,
        /// Skeletons file; defaults to <out>/skeletons.jsonl.
        #[arg(long)]
        skeletons: Option<PathBuf>,
    },
    /// Score a collected sample into a difference or similarity series.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        /// Sample file; defaults to <out>/sample.json.
        #[arg(long)]
        sample: Option<PathBuf>,
    },
    /// Test score series and render the audit report.
    Test {
        #[command(flatten)]
        common: CommonArgs,
        /// Series files, one per background pair; defaults to
        /// <out>/series.json.
        #[arg()]
        series: Vec<PathBuf>,
    },
    /// Full pipeline: pair, collect, score, test.
    Audit(CommonArgs),
    /// Validate the tests against synthetic worlds with known effects.
    Calibrate(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Pair(common)
            | Command::Audit(common)
            | Command::Calibrate(common)
            | Command::Collect { common, .. }
            | Command::Score { common, .. }
            | Command::Test { common, .. } => common,
        }
    }
}

/// Execute a parsed invocation.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    let config = RunConfig::load(&common.config, &common.overrides())?;
    let out = OutPaths::new(&config.out_dir);

    match &cli.command {
        Command::Pair(_) => {
            let skeletons = commands::cmd_pair(&config, &out)?;
            println!("wrote {} skeletons to {}", skeletons.len(), out.skeletons.display());
        }
        Command::Collect { skeletons, .. } => {
            let path = skeletons.clone().unwrap_or_else(|| out.skeletons.clone());
            let sample = commands::cmd_collect(&config, &path, &out)?;
            println!(
                "collected {} pairs into {} (manifest: {})",
                sample.n(),
                out.sample.display(),
                out.manifest.display()
            );
        }
        Command::Score { sample, .. } => {
            let path = sample.clone().unwrap_or_else(|| out.sample.clone());
            let series = commands::cmd_score(&config, &path, &out)?;
            println!("scored {} pairs into {}", series.len(), out.series.display());
        }
        Command::Test { series, .. } => {
            let paths = if series.is_empty() { vec![out.series.clone()] } else { series.clone() };
            let document = commands::cmd_test(&config, &paths, &out)?;
            print!("{}", document.table);
            println!("report: {}", out.report_json.display());
        }
        Command::Audit(_) => {
            let document = commands::cmd_audit(&config, &out)?;
            print!("{}", document.table);
            println!("report: {}", out.report_json.display());
        }
        Command::Calibrate(_) => {
            let summary =
                calibrate::run_calibration(&config.calibrate, config.alpha, config.seed)?;
            io::write_json_doc(&out.calibration, &summary)?;
            print!("{}", calibrate::render_summary(&summary));
            println!("summary: {}", out.calibration.display());
        }
    }
    Ok(())
}
