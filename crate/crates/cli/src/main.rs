//! `loconav`: navigation episodes, hand-track handover, TCP tracking and
//! world generation.

mod config;
mod error;
mod genworld;
mod handover;
mod nav;
mod svg;
mod track;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "loconav", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// JSON config file with optional `nav`, `scenario`, `keyframes` and
    /// `track` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run navigation episodes on a scenario and goal.
    Nav(nav::NavArgs),
    /// Turn a hand trajectory into a world-frame TCP trajectory.
    Handover(handover::HandoverArgs),
    /// Track a TCP trajectory with the reference controller and log rewards.
    Track(track::TrackArgs),
    /// Generate a random scenario and goal.
    GenWorld(genworld::GenWorldArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Nav(a) => nav::run(a),
        Command::Handover(a) => handover::run(a),
        Command::Track(a) => track::run(a),
        Command::GenWorld(a) => genworld::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
