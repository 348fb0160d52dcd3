use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "proxkit",
    version,
    about = "Proximal estimators for regular and irregular regression designs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate coefficients from a CSV dataset (columns y, x1..xp).
    Estimate(EstimateArgs),
    /// Run the irregular-design simulation study.
    Simulate(SimulateArgs),
    /// Run the built-in numerical self-checks.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Ridgeless,
    ModifiedRidgeless,
    Plse,
    Proximal,
}

/// `auto` (`μ = n^{-exponent}`) or a fixed positive value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuArg {
    Auto,
    Value(f64),
}

impl FromStr for MuArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MuArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(MuArg::Value(v)),
            _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Dataset CSV with header `y,x1,...,xp`.
    #[arg(long)]
    pub data: PathBuf,
    /// Estimation config (JSON): penalty, lambda, solver options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "proximal")]
    pub mode: Mode,
    /// Penalty level; overrides the config.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Spectral threshold for the modified Ridgeless estimator.
    #[arg(long)]
    pub mu: Option<MuArg>,
    /// Exponent used by `--mu auto`.
    #[arg(long)]
    pub mu_exponent: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON). Applied on top of `--preset` when both are given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical CPU count). Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated exponents α of λ_n = n^{-α}.
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub mu_exponent: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    /// Corrupt one check on purpose (exercises the failure path).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}
