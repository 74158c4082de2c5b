//! Command-line driver: scoring, benchmark building, search experiments and
//! reports, each writing CSV/SVG/JSONL outputs plus a run manifest.

mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::Config;
pub use manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    /// Outputs were written but some metrics failed.
    #[error("{0}")]
    Partial(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Partial(_) => 2,
            _ => 1,
        }
    }
}

macro_rules! input_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_errors!(
    zcnas::bench::BenchError,
    zcnas::proxy::ProxyError,
    zcnas::search::SearchError,
    zcnas::space::SpaceError,
    zcnas::analysis::AnalysisError
);

#[derive(Debug, Parser)]
#[command(name = "zcnas", version, about = "Zero-cost proxies for neural architecture search")]
pub struct Cli {
    /// Worker threads for parallel runs.
    #[arg(long, env = "ZCNAS_WORKERS", default_value_t = 1, global = true)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Preset name (`mini`, `nb201-like`) or config file.
    #[arg(long, default_value = "mini")]
    pub config: String,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score architectures with zero-cost proxies.
    Score(commands::score::ScoreArgs),
    /// Build a trained mini-benchmark or a synthetic tabular benchmark.
    #[command(subcommand)]
    Bench(commands::bench::BenchCommand),
    /// Run a repeated search experiment against a tabular benchmark.
    Search(commands::search::SearchArgs),
    /// Correlation tables, rank statistics and sensitivity sweeps.
    #[command(subcommand)]
    Report(commands::report::ReportCommand),
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("zcnas: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let workers = cli.workers.max(1);
    match &cli.command {
        Command::Score(a) => commands::score::run(a, workers),
        Command::Bench(c) => commands::bench::run(c, workers),
        Command::Search(a) => commands::search::run(a, workers),
        Command::Report(c) => commands::report::run(c, workers),
    }
}
