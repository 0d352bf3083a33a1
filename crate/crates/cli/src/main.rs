use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod config;
mod data;
mod error;
mod tasks;

use config::Task;

/// Sparse variational Gaussian processes: fitting, data generation and
/// finite-dimensional verification.
#[derive(Debug, Parser)]
#[command(name = "sparsekl", version)]
struct Cli {
    task: Task,
    /// JSON run configuration; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::load(cli.task, &cli.config, cli.seed, cli.out.as_deref()).and_then(|cfg| tasks::run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sparsekl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
