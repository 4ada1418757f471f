//! Command-line entry point: dataset generation, training, evaluation,
//! gradient verification, and adjacency debugging.
//!
//! Every command writes its artifacts under a run directory named by the
//! hash of its canonical config, alongside the config itself, so any output
//! is reproducible from `config.json` + seed. Exit codes: 0 success,
//! 1 runtime failure, 2 configuration error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "signalpred", version, about = "Trajectory prediction at signalized intersections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic intersection dataset with train/val/test splits.
    Generate(commands::GenerateArgs),
    /// Train a model on a generated dataset.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint with best-of-K sampling.
    Eval(commands::EvalArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck,
    /// Dump per-frame interaction masks as CSV.
    DumpMasks(commands::DumpMasksArgs),
}

/// Failures split by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn init_workers() {
    if let Ok(n) = std::env::var("SIGNALPRED_WORKERS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    init_workers();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Gradcheck => commands::gradcheck(),
        Command::DumpMasks(args) => commands::dump_masks(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
