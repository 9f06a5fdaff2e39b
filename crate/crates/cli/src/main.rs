//! `dlrc`: generate games, train, verify, roll out and plot.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 check failure.

mod commands;
mod plot;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::commands::{GenerateArgs, PlotArgs, RolloutArgs, TrainArgs, VerifyArgs};

#[derive(Debug, Parser)]
#[command(name = "dlrc", version, about = "Self-play CCE learning in Markov games")]
struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "DLRC_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random game as JSON.
    Generate(GenerateArgs),
    /// Train and write the metrics CSV (and optionally the run archive).
    Train(TrainArgs),
    /// Run the diagnostics suite on a run archive.
    Verify(VerifyArgs),
    /// Monte-Carlo roll-out of the averaged policy of a run archive.
    Rollout(RolloutArgs),
    /// Plot mean CCE-gap with a one standard deviation band as SVG.
    Plot(PlotArgs),
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Check(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Check(m) => m,
        }
    }
}

impl From<dlrc_core::Error> for Failure {
    fn from(e: dlrc_core::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let out_dir = cli.out_dir.as_deref();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a, out_dir),
        Command::Train(a) => commands::train(a, out_dir),
        Command::Verify(a) => commands::verify(a, out_dir),
        Command::Rollout(a) => commands::rollout(a, out_dir),
        Command::Plot(a) => commands::plot(a, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
