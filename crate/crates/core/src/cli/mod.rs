//! Command-line front end.
//!
//! Every command writes into one output directory (`-o`, default `out`):
//! data files first, then `<command>.manifest.json` with the command line, the
//! effective configuration hash, input and output digests and the seeds.
//! Files are written under a temporary name and renamed when complete.
//!
//! Flags can also be set from the environment: `DSQRT_SEED`, `DSQRT_JOBS`,
//! `DSQRT_CONFIG` and `DSQRT_OUT`.

mod commands;
pub mod output;
mod report;
pub mod svg;

pub use self::output::{OutputDir, RunManifest};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::PathBuf;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_FIT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Fit(String),
}

impl CliError {
    pub fn data(m: impl Into<String>) -> Self {
        CliError::Data(m.into())
    }

    pub fn fit(m: impl Into<String>) -> Self {
        CliError::Fit(m.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Fit(_) => EXIT_FIT,
        }
    }
}

impl From<crate::tape::TapeError> for CliError {
    fn from(e: crate::tape::TapeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::impact::ImpactError> for CliError {
    fn from(e: crate::impact::ImpactError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<crate::refill::RefillError> for CliError {
    fn from(e: crate::refill::RefillError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<crate::propagator::PropagatorError> for CliError {
    fn from(e: crate::propagator::PropagatorError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<crate::shuffle::ShuffleError> for CliError {
    fn from(e: crate::shuffle::ShuffleError) -> Self {
        use crate::shuffle::ShuffleError as S;
        match e {
            S::TooFewOrders(_) => CliError::Data(e.to_string()),
            S::BinMismatch | S::Impact(_) => CliError::Fit(e.to_string()),
        }
    }
}

impl From<crate::simulator::SimError> for CliError {
    fn from(e: crate::simulator::SimError) -> Self {
        use crate::simulator::SimError as S;
        match e {
            S::ConfigInvalid(m) => CliError::Usage(m),
            S::Io(e) => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dsqrt", version, about = "Metaorder impact analysis on ID-tagged order-flow tapes")]
pub struct Cli {
    /// Base seed for shuffles and simulations.
    #[arg(long, global = true, env = "DSQRT_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "DSQRT_JOBS")]
    pub jobs: Option<usize>,
    /// TOML file: analysis options, or a simulator configuration for `simulate`.
    #[arg(long, global = true, env = "DSQRT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short = 'o', long = "out", global = true, env = "DSQRT_OUT", default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct TapeArgs {
    /// Tape in CSV or binary form.
    pub tape: PathBuf,
    /// Metadata sidecar; defaults to the tape path with a `.meta` extension.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    PaperLike,
    ChildProfile,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a tape, split it into sessions and write per-session statistics.
    Ingest(TapeArgs),
    /// Reconstruct metaorders and their stylized facts.
    Metaorders(TapeArgs),
    /// Metaorder impact against volume fraction, with a power-law fit.
    Impact(TapeArgs),
    /// Mean price path along the children of a metaorder.
    ChildProfile(TapeArgs),
    /// Impact of single market orders in volume time.
    SingleMo(TapeArgs),
    /// Compare impact curves of real and ID-shuffled metaorders.
    Shuffle {
        #[command(flatten)]
        tape: TapeArgs,
        /// Number of shuffles, with seeds `seed, seed + 1, ...`.
        #[arg(long)]
        shuffles: Option<u64>,
    },
    /// Fast/slow trader classification and volume shares.
    Ecology(TapeArgs),
    /// Liquidity-provider refill sequences and refill functions.
    Refill(TapeArgs),
    /// Generate a synthetic tape with its ground-truth ledger.
    Simulate {
        #[arg(long, value_enum, default_value = "paper-like")]
        preset: Preset,
        /// Override the number of trading days.
        #[arg(long)]
        days: Option<u32>,
    },
    /// Render CSV and SVG figures from the outputs of earlier commands.
    Report {
        /// Directory holding earlier outputs.
        input: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Metaorders(_) => "metaorders",
            Command::Impact(_) => "impact",
            Command::ChildProfile(_) => "child-profile",
            Command::SingleMo(_) => "single-mo",
            Command::Shuffle { .. } => "shuffle",
            Command::Ecology(_) => "ecology",
            Command::Refill(_) => "refill",
            Command::Simulate { .. } => "simulate",
            Command::Report { .. } => "report",
        }
    }
}

/// Estimator settings read from `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub bins_per_decade: usize,
    pub min_bin_count: u64,
    /// Largest child rank used in the child-profile fits.
    pub profile_max_rank: usize,
    /// Bin length for intraday volatility and volume, minutes.
    pub seasonality_minutes: i64,
    pub shuffles: u64,
    /// Salt for the hashed provider identifiers in refill exports.
    pub provider_salt: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            f_min: 1e-6,
            f_max: 1.0,
            bins_per_decade: 4,
            min_bin_count: crate::impact::DEFAULT_MIN_BIN_COUNT,
            profile_max_rank: 50,
            seasonality_minutes: 15,
            shuffles: 10,
            provider_salt: "dsqrt".into(),
        }
    }
}

impl AnalysisConfig {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.f_min > 0.0 && self.f_max > self.f_min) || self.bins_per_decade == 0 {
            return Err(CliError::Usage("config: need 0 < f_min < f_max and bins_per_decade > 0".into()));
        }
        if self.profile_max_rank < 3 || self.seasonality_minutes <= 0 || self.shuffles == 0 {
            return Err(CliError::Usage(
                "config: profile_max_rank >= 3, seasonality_minutes > 0 and shuffles > 0 are required".into(),
            ));
        }
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, recorded) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, args: Vec<String>) -> Result<RunManifest, CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    commands::dispatch(cli, args)
}
