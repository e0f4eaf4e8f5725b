//! `covfdr` command line: simulate data, run FDR procedures, sweep settings
//! and export rule grids.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 1 for
//! internal failures. `COVFDR_THREADS` caps the worker pool.

mod common;
mod generate;
mod grid;
mod run;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::{usage, CliResult};

#[derive(Parser)]
#[command(name = "covfdr", version, about = "Covariate-aware multiple testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labelled dataset from a named family.
    Generate(generate::GenerateArgs),
    /// Run one procedure on a dataset.
    Run(run::RunArgs),
    /// Run every method x alpha x seed combination on one dataset.
    Sweep(sweep::SweepArgs),
    /// Evaluate a saved rule on a regular feature grid.
    ThresholdGrid(grid::GridArgs),
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("COVFDR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("COVFDR_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| common::CliError::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Run(a) => run::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::ThresholdGrid(a) => grid::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}
