use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "actshape",
    version,
    about = "Shape activity in Hawkes-process networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate cascades from a model file.
    Simulate(Invocation),
    /// Fit a model to an events file.
    Estimate(Invocation),
    /// Optimize exogenous incentives for one task.
    Shape(Invocation),
    /// Compare the optimized allocation with baselines.
    Eval(Invocation),
    /// Solve one task for a list of sparsity penalties.
    Sweep(Invocation),
}

impl Command {
    pub fn invocation(&self) -> &Invocation {
        match self {
            Command::Simulate(i)
            | Command::Estimate(i)
            | Command::Shape(i)
            | Command::Eval(i)
            | Command::Sweep(i) => i,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Invocation {
    /// JSON file with any of the settings below, keyed by their snake_case names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Cam,
    Mmash,
    Lsash,
    Hom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Theoretical,
    Simulated,
    Heldout,
}

/// Every setting is optional here; each command checks what it needs.
#[derive(Debug, Clone, Default, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Model JSON file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Events CSV file.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskName>,
    /// Total budget C.
    #[arg(long, allow_negative_numbers = true)]
    pub budget: Option<f64>,
    /// `uniform` or a vector CSV of per-user costs.
    #[arg(long)]
    pub costs: Option<String>,
    /// Time horizon t (simulation length, observation window or shaping time).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sparsity penalty γ.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of cascades to simulate or simulation runs per evaluation.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Window width for empirical intensities.
    #[arg(long)]
    pub window: Option<f64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Solver tolerance (relative objective change for shaping, projected
    /// gradient size for estimation).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Vector CSV of caps for `cam`; sampled from the seed when absent.
    #[arg(long)]
    pub caps: Option<PathBuf>,
    /// Vector CSV of target intensities for `lsash`.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Comma-separated ascending penalties for `sweep`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub gammas: Option<Vec<f64>>,
    /// Kernel bandwidth ω for estimation.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Comma-separated ω candidates chosen by cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub omega_grid: Option<Vec<f64>>,
    /// Cross-validation folds for `--omega-grid`.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Number of users; inferred from the events when absent.
    #[arg(long)]
    pub users: Option<usize>,
    /// CSV of `row,col` edges restricting the estimated influence matrix.
    #[arg(long)]
    pub support: Option<PathBuf>,
    /// Comma-separated events CSV files, one per held-out interval.
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<PathBuf>>,
    /// Comma-separated evaluation schemes.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub schemes: Option<Vec<Scheme>>,
    /// Per-cascade event cap for simulation.
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Solver iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

macro_rules! prefer_flags {
    ($flags:expr, $file:expr, $($field:ident),+ $(,)?) => {
        Settings { $($field: $flags.$field.or($file.$field)),+ }
    };
}

impl Settings {
    /// Flags override the configuration file field by field.
    pub fn merged(flags: Settings, file: Settings) -> Settings {
        prefer_flags!(
            flags, file, model, events, out, task, budget, costs, horizon, gamma, seed, runs, window,
            threads, tol, caps, target, gammas, omega, omega_grid, folds, users, support, intervals, schemes,
            max_events, max_iter,
        )
    }

    pub fn load(inv: &Invocation) -> Result<Settings> {
        let file = match &inv.config {
            Some(path) => read_config(path)?,
            None => Settings::default(),
        };
        Ok(Settings::merged(inv.settings.clone(), file))
    }
}

fn read_config(path: &Path) -> Result<Settings> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Fetches a required setting or reports the flag that supplies it.
pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| CliError::usage(format!("missing required setting --{flag}")))
}
