//! `ribkit` — measure, assign, and evaluate rib segmentations from the
//! command line.

mod analyze;
mod common;
mod evaluate;
mod experiment;
mod phantom_cmd;
mod snapshot_cmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ribkit",
    version,
    about = "Rib instance assignment, length measurement, morphometry and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)] // one short-lived instance at startup
enum Command {
    /// Full pipeline: assign ribs to vertebrae, measure lengths, extract features
    Analyze(analyze::Args),
    /// Render a 2D maximum-label projection of a labeled volume as PPM
    Snapshot(snapshot_cmd::Args),
    /// Compare a predicted instance map against a reference (panoptic metrics)
    Evaluate(evaluate::Args),
    /// Run the classifier experiment grid or the stump-threshold sweep
    Experiment(experiment::Args),
    /// Generate a synthetic scene with known geometry for validation
    Phantom(phantom_cmd::Args),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::Snapshot(args) => snapshot_cmd::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::Experiment(args) => experiment::run(args),
        Command::Phantom(args) => phantom_cmd::run(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
