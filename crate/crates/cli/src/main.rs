mod commands;
mod config;
mod lock;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Globals;
use config::{config_error, ConfigError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

/// Train, roll out and evaluate ensembles of neural surrogates for
/// time-dependent fields. Every subcommand reads a JSON config.
#[derive(Parser, Debug)]
#[command(name = "ensroll", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config for the subcommand (schemas live in `schemas/`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the seed given in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "ER_WORKERS")]
    workers: Option<usize>,

    /// Reduce training gradients in a fixed order so runs are bitwise
    /// reproducible regardless of worker count.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a Gray-Scott dataset or sample load paths.
    GenData,
    /// Train an ensemble on a dataset.
    Train,
    /// Shared-history rollout of a test set: predictions, metrics, snapshots.
    Rollout,
    /// Ensemble and per-member curves, best/worst comparison and the MSE
    /// decomposition.
    Evaluate,
    /// Error versus ensemble size.
    Sweep,
    /// Markdown report from a run directory's metrics.
    Report {
        /// Run directory; overrides `run_dir` from --config.
        run_dir: Option<PathBuf>,
    },
}

fn need_config(c: &Option<PathBuf>) -> Result<&Path> {
    c.as_deref().ok_or_else(|| config_error("--config is required for this subcommand"))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(config_error("--workers / ER_WORKERS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(format!("worker pool: {e}")))?;
    }
    let g = Globals {
        seed: cli.seed,
        deterministic: cli.deterministic,
    };
    match &cli.command {
        Command::GenData => commands::gen_data(need_config(&cli.config)?, g),
        Command::Train => commands::train(need_config(&cli.config)?, g),
        Command::Rollout => commands::rollout(need_config(&cli.config)?, g),
        Command::Evaluate => commands::evaluate(need_config(&cli.config)?, g),
        Command::Sweep => commands::sweep(need_config(&cli.config)?, g),
        Command::Report { run_dir } => commands::report(cli.config.as_deref(), run_dir.as_deref(), g),
    }
}

/// The first recognised error in the chain decides the exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<ensroll::Error>() {
            return if e.is_numeric() {
                EXIT_NUMERIC
            } else if e.is_io() {
                EXIT_IO
            } else {
                EXIT_CONFIG
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<image::ImageError>() {
            return EXIT_IO;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
