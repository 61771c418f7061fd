//! `pyroflux`: dataset generation, surrogate training and coupled
//! fluidized-bed runs from JSON configuration files.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pyroflux_core::coupling::CouplingError;

/// A problem with the invocation or its inputs; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl From<CouplingError> for UsageError {
    fn from(e: CouplingError) -> Self {
        UsageError(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "pyroflux", version, about = "Fluidized-bed biomass gasification with surrogate kinetics")]
struct Cli {
    /// Command configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "PYROFLUX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or import labeled TGA datasets.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Train a random forest or MLP surrogate on a dataset.
    Train,
    /// Score a trained model on a dataset.
    Evaluate,
    /// Run a coupled bed simulation.
    Simulate,
    /// Run a scenario with ORACLE and SURROGATE kinetics and compare them.
    Compare,
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Label a grid of virtual TGA runs with the mechanism.
    Build,
    /// Validate and import a CSV of measured samples.
    Ingest,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<UsageError>()) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let Some(config) = cli.config else {
        eprintln!("error: --config <FILE> is required");
        return ExitCode::from(2);
    };
    let g = commands::Globals { config, seed: cli.seed, out: cli.out };
    let result = match cli.command {
        Command::Dataset { action: DatasetAction::Build } => commands::dataset_build(&g),
        Command::Dataset { action: DatasetAction::Ingest } => commands::dataset_ingest(&g),
        Command::Train => commands::train(&g),
        Command::Evaluate => commands::evaluate(&g),
        Command::Simulate => commands::simulate(&g),
        Command::Compare => commands::compare(&g),
    };
    match result {
        Ok(done) => {
            println!("{}", done.summary);
            println!("run directory: {}", done.run_dir.display());
            if done.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("FAILED; see {}", done.run_dir.join("manifest.json").display());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
