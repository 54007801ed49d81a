//! `aggss` command-line interface: run experiments, compare runs, render
//! attention maps, and build scenario manifests.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 success, 2 configuration or input error, 1 runtime failure.
#[derive(Parser)]
#[command(name = "aggss", version, about = "Rotation-expanded self-supervision for class-incremental learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full incremental experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare one or more finished runs: AIA table and accuracy curves.
    Report {
        /// Run directories (each containing metrics.json).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Baseline run name for delta columns; first run when omitted.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render per-rotation attention-map grids for images.
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image files (PNG/JPEG).
        #[arg(long, required = true, num_args = 1..)]
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Tap layer name; backbone default when omitted.
        #[arg(long)]
        layer: Option<String>,
        /// Target class index; aggregated prediction when omitted.
        #[arg(long)]
        target: Option<usize>,
        /// Second checkpoint rendered as a comparison row.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Build a task-stream manifest and its distribution plot.
    MakeScenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => commands::run::execute(&config, seed, out.as_deref()),
        Command::Report {
            runs,
            baseline,
            out,
        } => commands::report::execute(&runs, baseline.as_deref(), out.as_deref()),
        Command::Gradcam {
            checkpoint,
            images,
            out,
            layer,
            target,
            compare,
        } => commands::gradcam::execute(
            &checkpoint,
            &images,
            &out,
            layer.as_deref(),
            target,
            compare.as_deref(),
        ),
        Command::MakeScenario { config, seed, out } => {
            commands::make_scenario::execute(&config, seed, out.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Configuration and input problems exit 2; runtime failures exit 1.
fn exit_code(e: &aggss_core::Error) -> u8 {
    use aggss_core::Error::*;
    match e {
        Config(_) | InvalidArgument(_) | MissingPath(_) | UnknownArchitecture(_)
        | UnknownLayer(_) | Manifest(_) | Checksum { .. } => 2,
        _ => 1,
    }
}
