//! `dtrack`: ingest MIDI, train, generate, evaluate and render.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod data;
mod failure;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use env_logger::Env;

use commands::evaluate::{EvaluateArgs, RenderArgs};
use commands::generate::GenerateArgs;
use commands::gradcheck::GradcheckArgs;
use commands::ingest::{BuildCorpusArgs, IngestArgs};
use commands::train::TrainArgs;
use failure::Outcome;

/// Dual-track piano music generator. Set DTRACK_LOG=error|info|debug for
/// log output on stderr.
#[derive(Debug, Parser)]
#[command(name = "dtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and quantize MIDI files and print per-file statistics
    Ingest(IngestArgs),
    /// Collect the distinct chords of MIDI files into a corpus JSON
    BuildCorpus(BuildCorpusArgs),
    /// Train a model and write its checkpoint, config, run record and loss CSV
    Train(TrainArgs),
    /// Generate a MIDI continuation from a trained checkpoint
    Generate(GenerateArgs),
    /// Print used-pitch-class and qualified-note metrics for MIDI files
    Evaluate(EvaluateArgs),
    /// Render a MIDI file as a PGM pianoroll image
    Render(RenderArgs),
    /// Run the finite-difference gradient suite
    Gradcheck(GradcheckArgs),
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Ingest(a) => commands::ingest::ingest(a),
        Command::BuildCorpus(a) => commands::ingest::build_corpus(a),
        Command::Train(a) => commands::train::run(a),
        Command::Generate(a) => commands::generate::run(a),
        Command::Evaluate(a) => commands::evaluate::run_evaluate(a),
        Command::Render(a) => commands::evaluate::run_render(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("DTRACK_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dtrack: {f}");
            f.exit_code()
        }
    }
}
