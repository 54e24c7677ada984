mod commands;
mod config;
mod error;
mod files;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switchmorse::benchmarks::Method;

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};

/// Switching-system identification and Morse graphs on cubical grids.
#[derive(Parser)]
#[command(name = "switchmorse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories of the configured system.
    Simulate(Common),
    /// Identify a switching model from a trajectory dataset.
    Identify(Common),
    /// Build the configured cell map and compute its Morse graph.
    Morse(Common),
    /// Compare stored runs (first is the reference).
    Compare {
        #[command(flatten)]
        common: Common,
        /// Run directories written by `morse`; defaults to every method under --out.
        runs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// ground_truth, lipschitz, gp or identified.
    #[arg(long)]
    method: Option<String>,
    /// 2^k subdivisions per axis.
    #[arg(long, value_name = "K")]
    grid: Option<u32>,
    #[arg(long)]
    tau: Option<f64>,
    /// Trajectory CSV (default <out>/dataset.csv).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Identified model JSON (default <out>/model.json).
    #[arg(long)]
    model: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> CliResult<(RunConfig, config::System)> {
        let method = self
            .method
            .as_deref()
            .map(str::parse::<Method>)
            .transpose()?;
        if self.grid.is_some_and(|k| k == 0 || k > 16) {
            return Err(CliError::Config("--grid must be between 1 and 16".into()));
        }
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            method,
            grid: self.grid,
            tau: self.tau,
            dataset: self.data.clone(),
            model: self.model.clone(),
        });
        cfg.resolve()
    }
}

fn run(cli: Cli) -> CliResult<PathBuf> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, sys) = c.config()?;
            commands::simulate(&cfg, &sys)
        }
        Command::Identify(c) => {
            let (cfg, _) = c.config()?;
            commands::identify(&cfg)
        }
        Command::Morse(c) => {
            let (cfg, sys) = c.config()?;
            commands::morse(&cfg, &sys)
        }
        Command::Compare { common, runs } => {
            let (cfg, _) = common.config()?;
            commands::compare_runs(&cfg, &runs)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(path) => {
            log::info!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
