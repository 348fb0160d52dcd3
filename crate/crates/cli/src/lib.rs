//! Library side of the `proxkit` binary, so the subcommands can be driven
//! from tests.

pub mod args;
mod check;
mod estimate;
mod simulate;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;
use proxkit::Error;
use serde::Serialize;

pub use args::{Cli, Command};
pub use estimate::EstimateConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Usage(String),
    ChecksFailed(usize),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => e.fmt(f),
            CliError::Usage(msg) => f.write_str(msg),
            CliError::ChecksFailed(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed(_) => EXIT_CHECK_FAILED,
            CliError::Usage(_) => EXIT_BAD_INPUT,
            CliError::Lib(e) => match e {
                Error::NonConvergence { .. }
                | Error::RankDeficient
                | Error::EigenNoConvergence { .. }
                | Error::NotPsd { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::ExtendedPenaltyNotConvex { .. } => EXIT_SOLVER,
                _ => EXIT_BAD_INPUT,
            },
        }
    }
}

/// Provenance block attached to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct OutputMetadata {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: &'static str,
}

pub(crate) fn metadata(config_hash: String, seed: Option<u64>) -> OutputMetadata {
    OutputMetadata {
        config_hash,
        seed,
        version: env!("CARGO_PKG_VERSION"),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(a) => estimate::run(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Check(a) => check::run(&a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_BAD_INPUT
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
