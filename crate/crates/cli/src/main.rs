//! `bnnwidth`: generate synthetic suites, fit BNNs and their limiting
//! NNGPs, and emit the comparison tables as CSV.

mod commands;
mod config;
mod error;
mod ledger;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, Run};

#[derive(Debug, Parser)]
#[command(name = "bnnwidth", version, about = "Finite-width BNNs against their limiting NNGPs")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the file).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Work units run concurrently.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Long sampler budgets and 200 datasets.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the dataset suite and its manifest.
    Gen,
    /// Fit every (dataset, model, threshold) unit; resumes from the ledger.
    Fit,
    /// Paired deltas, LDL and spectrum tables from the fitted metrics.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: config: --config <path> is required");
        return ExitCode::from(1);
    };
    let overrides = Overrides { seed: cli.seed, out_dir: cli.out_dir.clone(), workers: cli.workers, full_scale: cli.full_scale };
    let result = Run::load(path, &overrides).and_then(|run| match cli.command {
        Command::Gen => commands::cmd_gen(&run),
        Command::Fit => commands::cmd_fit(&run),
        Command::Report => commands::cmd_report(&run),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
