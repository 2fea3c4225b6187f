//! `evaluate` and `render`.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use dtrack_core::metrics::evaluate;
use dtrack_core::repr::write_pgm;
use serde::Serialize;

use super::{check_writable, GridArgs, Hand};
use crate::data::{load_piece, load_pieces};
use crate::failure::{DataContext, Failure, Outcome};
use crate::manifest::{config_hash, manifest_path, record, Artifact};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// MIDI files or directories (searched recursively)
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Row label for the computed values
    #[arg(long, default_value = "Evaluated")]
    pub label: String,
    /// Also write the report as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Manifest to update when writing JSON (default: beside the JSON)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overwrite an existing JSON report
    #[arg(long)]
    pub force: bool,
}

pub fn run_evaluate(args: EvaluateArgs) -> Outcome {
    let grid = args.grid.grid()?;
    if let Some(j) = &args.json {
        check_writable(&[j], args.force)?;
    }
    let pieces = load_pieces(&args.paths, grid)?;
    let rolls: Vec<_> = pieces.iter().map(|p| p.merged()).collect();
    let report = evaluate(&rolls).map_err(|e| Failure::Data(anyhow::Error::new(e).context("evaluating")))?;
    print!("{}", report.to_table(&args.label));
    if let Some(j) = &args.json {
        fs::write(j, report.to_json()).data_ctx(|| format!("writing {}", j.display()))?;
        let sources: Vec<_> = pieces.iter().map(|p| p.source.clone()).collect();
        record(&manifest_path(args.manifest.as_deref(), j), |m| {
            m.artifacts.insert(
                j.clone(),
                Artifact {
                    kind: "metrics-report".into(),
                    command: "evaluate".into(),
                    config_hash: config_hash(&(grid, &sources)),
                    inputs: args.paths.clone(),
                },
            );
        })?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// MIDI file to render
    pub midi: PathBuf,
    /// PGM image to write (time across, pitch up)
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Which part to draw
    #[arg(long, value_enum, default_value_t = Hand::Merged)]
    pub hand: Hand,
    /// Manifest to update (default: beside the image)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overwrite an existing image
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct RenderConfig<'a> {
    grid: dtrack_core::repr::GridConfig,
    hand: String,
    source: &'a str,
}

pub fn run_render(args: RenderArgs) -> Outcome {
    let grid = args.grid.grid()?;
    check_writable(&[&args.out], args.force)?;
    let piece = load_piece(&args.midi, grid)?;
    let roll = args.hand.roll(&piece);
    if roll.is_empty() {
        return Err(Failure::data(format!("{} has no notes to render", args.midi.display())));
    }
    write_pgm(&roll, &args.out).data_ctx(|| format!("writing {}", args.out.display()))?;
    let hash = config_hash(&RenderConfig { grid, hand: format!("{:?}", args.hand), source: &piece.source.sha256 });
    record(&manifest_path(args.manifest.as_deref(), &args.out), |m| {
        m.artifacts.insert(
            args.out.clone(),
            Artifact { kind: "pgm".into(), command: "render".into(), config_hash: hash, inputs: vec![args.midi.clone()] },
        );
    })?;
    println!("wrote {} ({} steps)", args.out.display(), roll.len());
    Ok(())
}
