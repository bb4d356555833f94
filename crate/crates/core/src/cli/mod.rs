//! The `mslevy` command-line driver.
//!
//! ```text
//! mslevy <command> --config <path> [--seed N] [--out DIR]
//! ```
//!
//! Exit codes: 0 success, 1 a configured acceptance check failed, 2
//! configuration or input error, 3 numerical abort. Failures append one
//! JSON line to `error.log` in the output directory.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::ergodic::ErgodicError;
use crate::estimate::EstimateError;
use crate::integrate::IntegrateError;
use crate::stats::StatsError;

pub use commands::Outcome;
pub use config::{parse_config, ModelRef, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_OUT: &str = "mslevy-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    ValidateModel,
    FrozenStats,
    AvgTable,
    PoissonCheck,
    Ergodicity,
    StrongOrder,
    WeakOrder,
    FastMoments,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ValidateModel => "validate-model",
            Command::FrozenStats => "frozen-stats",
            Command::AvgTable => "avg-table",
            Command::PoissonCheck => "poisson-check",
            Command::Ergodicity => "ergodicity",
            Command::StrongOrder => "strong-order",
            Command::WeakOrder => "weak-order",
            Command::FastMoments => "fast-moments",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Numerical(_) => "numerical",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::Config(_) | IntegrateError::Levy(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ErgodicError> for CliError {
    fn from(e: ErgodicError) -> Self {
        match e {
            ErgodicError::Integrate(inner) => inner.into(),
            ErgodicError::Stats(inner) => inner.into(),
            ErgodicError::Config(_) | ErgodicError::Format(_) => CliError::Config(e.to_string()),
            ErgodicError::TableRejected { .. } | ErgodicError::NotConvergent { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Integrate(inner) => inner.into(),
            EstimateError::Stats(inner) => inner.into(),
            EstimateError::Aborted { .. } => CliError::Numerical(e.to_string()),
            EstimateError::Config(_) => CliError::Config(e.to_string()),
            EstimateError::Io(inner) => inner.into(),
            EstimateError::Json(inner) => inner.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mslevy", version, about = "Averaging studies for slow-fast SDEs with jumps")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Args::try_parse_from(args) {
        Ok(a) => run(a.command, &a.config, a.seed, a.out.as_deref()).code,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

/// Result of [`run`]: the exit code and the directory written to.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub code: i32,
    pub out: PathBuf,
    pub outcome: Option<Outcome>,
}

/// Runs `cmd` with the config at `config_path`.
pub fn run(cmd: Command, config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> RunResult {
    let mut out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let result = (|| -> Result<Outcome, CliError> {
        let text = fs::read_to_string(config_path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", config_path.display())))?;
        let mut cfg = parse_config(&text, cmd)?;
        if out.is_none() {
            if let Some(dir) = &cfg.out {
                out_dir = dir.clone();
            }
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.resolve(cmd);
        let spec = cfg.model.build()?;
        fs::create_dir_all(&out_dir)?;
        fs::write(out_dir.join("effective_config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
        let outcome = commands::dispatch(cmd, &cfg, &spec, &out_dir)?;
        fs::write(out_dir.join("summary.txt"), outcome.summary())?;
        Ok(outcome)
    })();
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary());
            let code = if outcome.passed { EXIT_OK } else { EXIT_CHECK_FAILED };
            RunResult { code, out: out_dir, outcome: Some(outcome) }
        }
        Err(e) => {
            let code = e.exit_code();
            let line = serde_json::json!({
                "exit": code,
                "kind": e.kind(),
                "command": cmd.name(),
                "reason": e.to_string(),
            });
            eprintln!("{line}");
            if fs::create_dir_all(&out_dir).is_ok() {
                if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(out_dir.join("error.log")) {
                    let _ = writeln!(f, "{line}");
                }
            }
            RunResult { code, out: out_dir, outcome: None }
        }
    }
}
