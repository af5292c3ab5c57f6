//! `cliffclimb`: scenario runner for the cliff-climbing simulation toolkit.
//!
//! Exit codes: 0 success, 1 runtime error, 2 invalid configuration,
//! 3 simulated system failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(anyhow::Error),
    SystemFailure(String),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Parser)]
#[command(name = "cliffclimb", version, about = "Tethered multirobot cliff-climbing simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials for `study`
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads for parallel sections
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Synthesize a rough wall patch and its asperities
    Terrain,
    /// Fly one hop and compare reach across bodies
    Hop,
    /// Run the tethered climbing gait
    Climb,
    /// Failure-probability curves and fitness trade study
    Study,
    /// Solve the thruster force for the reference hop
    Calibrate,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let loaded = config::load(path, cli.seed)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Terrain => commands::terrain(&loaded, out),
        Command::Hop => commands::hop(&loaded, out),
        Command::Climb => commands::climb(&loaded, out),
        Command::Study => commands::study(&loaded, out, cli.trials),
        Command::Calibrate => commands::calibrate(&loaded, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::SystemFailure(msg)) => {
            eprintln!("climb FAILED: {msg}");
            ExitCode::from(3)
        }
    }
}
