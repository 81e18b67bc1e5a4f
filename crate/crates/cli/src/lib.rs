//! Command-line front end: dataset analysis, simulation grids, pivot
//! quantiles and report validation.

pub mod commands;
pub mod exit;
pub mod report;
pub mod schema;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hcbm", version, about = "Random-effects meta-analysis intervals under publication bias")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute intervals for one dataset.
    Analyze(commands::AnalyzeArgs),
    /// Run a coverage and length simulation grid.
    Simulate(commands::SimulateArgs),
    /// Print a quantile of the pivot distribution.
    Quantile(commands::QuantileArgs),
    /// Check a JSON report against the shipped schema.
    Validate(commands::ValidateArgs),
}

pub fn run(cli: &Cli) -> Result<exit::Status, exit::CliError> {
    match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Quantile(a) => commands::quantile(a),
        Command::Validate(a) => commands::validate(a),
    }
}
