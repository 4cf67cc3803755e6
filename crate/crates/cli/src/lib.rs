//! Command line front end: scenario files in, `report.json`, CSV tables,
//! SVG plots and a text summary out.

pub mod config;
pub mod experiments;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use csl_core::CslError;

pub use config::{Experiment, ScenarioConfig};
pub use experiments::{run_scenario, RunOutcome};

/// Version of the `report.json` layout.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CslError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "csl", version, about = "Subordinators above a moving boundary: scenario runner")]
pub struct Cli {
    /// Scenario file (TOML).
    #[arg(long, env = "CSL_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the scenario's `seed`.
    #[arg(long, env = "CSL_SEED", global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); overrides the scenario's `workers`.
    #[arg(long, env = "CSL_WORKERS", global = true)]
    pub workers: Option<usize>,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long, env = "CSL_OUT", global = true)]
    pub out: Option<PathBuf>,
    /// Defaults to the scenario's `experiment` key.
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Transience criterion I(f) and optional tail-regularity validation.
    Classify,
    /// Survival probabilities, Φ and the asymptotic diagnostics.
    Crossing,
    /// Finite-horizon Doob identity, bin by bin.
    Doob,
    /// Ratio of shifted to unshifted survival along a T schedule.
    Qh,
    /// Φ(∞) plateau detection and the explosion-time law.
    Explosion,
    /// Envelope integral J(h) and conditioned fractions.
    Envelope,
    /// Chernoff domination, distributional laws and shifted-boundary checks.
    Bounds,
    /// Quick deterministic checks of every module.
    Selftest,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Classify => Experiment::Classify,
            Command::Crossing => Experiment::Crossing,
            Command::Doob => Experiment::Doob,
            Command::Qh => Experiment::Qh,
            Command::Explosion => Experiment::Explosion,
            Command::Envelope => Experiment::Envelope,
            Command::Bounds => Experiment::Bounds,
            Command::Selftest => Experiment::Selftest,
        }
    }
}

/// Resolves the scenario: file (or defaults), then flag/env overrides.
pub fn resolve(cli: &Cli) -> Result<(ScenarioConfig, Experiment), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    let exp = cli
        .command
        .map(Experiment::from)
        .or(cfg.experiment)
        .ok_or_else(|| CliError::Config("no experiment: give a subcommand or set `experiment` in the scenario".into()))?;
    Ok((cfg, exp))
}

/// Parses arguments, runs, writes outputs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = resolve(&cli).and_then(|(cfg, exp)| {
        let outcome = run_scenario(&cfg, exp)?;
        output::write_outcome(&cfg, &outcome)?;
        Ok(outcome)
    });
    match result {
        Ok(o) => {
            print!("{}", o.summary);
            if o.failed {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("csl: {e}");
            2
        }
    }
}
