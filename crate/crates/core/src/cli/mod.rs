//! Command-line entry point.
//!
//! Every command reads one JSON run configuration (`--config`) and writes its
//! artifacts below the configured output directory. JSON artifacts carry the
//! SHA-256 of the configuration file and the master seed. Scalar results are
//! printed to stdout as `key=value` lines.

mod commands;
mod config;
mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvalError;
use crate::goodput::GoodputError;
use crate::hyperopt::HyperoptError;
use crate::ingest::IngestError;
use crate::regressors::ModelError;
use crate::stats::StatsError;

pub use config::{HyperoptOptions, ImportanceOptions, LoadedConfig, ReportOptions, RunConfig, StatsOptions, SweepOptions};
pub use report::{build_table, ReportTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
/// The report was written but some expected runs are absent or failed.
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            ModelError::Numerical(_) | ModelError::Diverged { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) | EvalError::Model(ModelError::Config(_)) => CliError::Usage(e.to_string()),
            _ if e.is_numerical() => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HyperoptError> for CliError {
    fn from(e: HyperoptError) -> Self {
        match e {
            HyperoptError::Config(_) => CliError::Usage(e.to_string()),
            HyperoptError::AllFailed(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<GoodputError> for CliError {
    fn from(e: GoodputError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Wrapper written around every JSON result.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Envelope<T> {
    pub config_sha256: String,
    pub seed: u64,
    /// `complete` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
}

#[derive(Debug, Parser)]
#[command(name = "sidelink-mcs", version, about = "MCS prediction for LTE sidelink drive tests")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse traces into the sample dataset.
    Ingest,
    /// RSRP densities and packet error rates.
    Stats,
    /// Fit one model on the whole dataset.
    Train {
        #[arg(long)]
        model: String,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Leave-one-round-out goodput of a model or a reference policy.
    #[command(group(ArgGroup::new("what").required(true).args(["model", "oracle", "fixed_mcs"])))]
    Evaluate {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        fixed_mcs: Option<u8>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Permutation feature importance.
    Importance {
        #[arg(long)]
        model: String,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Goodput against the number of most important features.
    SweepFeatures {
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Goodput against training-set size.
    SweepSamples {
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Random hyperparameter search.
    Hyperopt {
        #[arg(long)]
        model: String,
        #[arg(long)]
        n_iter: Option<usize>,
        /// Search space file; overrides the configuration.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Collect evaluation reports into one table.
    Report,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A pool can only be installed once per process; later calls keep it.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already initialised: {e}");
        }
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let loaded = LoadedConfig::load(path)?;
    let ctx = commands::Context::new(loaded, cli.seed);
    match &cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Stats => commands::stats(&ctx),
        Command::Train { model, dataset } => commands::train(&ctx, model, dataset.as_deref()),
        Command::Evaluate {
            model,
            oracle,
            fixed_mcs,
            dataset,
        } => commands::evaluate(&ctx, model.as_deref(), *oracle, *fixed_mcs, dataset.as_deref()),
        Command::Importance { model, repeats, dataset } => {
            commands::importance(&ctx, model, *repeats, dataset.as_deref())
        }
        Command::SweepFeatures { models, dataset } => commands::sweep_features(&ctx, models, dataset.as_deref()),
        Command::SweepSamples { models, sizes, dataset } => {
            commands::sweep_samples(&ctx, models, sizes, dataset.as_deref())
        }
        Command::Hyperopt {
            model,
            n_iter,
            space,
            dataset,
        } => commands::hyperopt(&ctx, model, *n_iter, space.as_deref(), dataset.as_deref()),
        Command::Report => report::report(&ctx),
    }
}
