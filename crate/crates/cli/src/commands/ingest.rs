//! `ingest` and `build-corpus`.

use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use dtrack_core::repr::{ChordCorpus, GridConfig};
use log::info;
use serde::Serialize;

use super::{check_writable, GridArgs, Hand};
use crate::data::{load_pieces, Piece, SourceRecord};
use crate::failure::{DataContext, Outcome};
use crate::manifest::{config_hash, manifest_path, record, Artifact};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// MIDI files or directories (searched recursively)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Write the per-file statistics as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest to update (default: beside the output)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PieceStats {
    pub source: SourceRecord,
    pub tracks: usize,
    pub notes: usize,
    pub right_notes: usize,
    pub left_notes: usize,
    pub steps: usize,
    pub bars: usize,
    pub distinct_chords: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub grid: GridConfig,
    pub pieces: Vec<PieceStats>,
}

fn stats(piece: &Piece) -> PieceStats {
    let merged = piece.merged();
    let chords: HashSet<_> = merged.rows().iter().filter(|f| !f.is_empty()).collect();
    let right = dtrack_core::repr::from_pianoroll(&piece.right).len();
    let left = dtrack_core::repr::from_pianoroll(&piece.left).len();
    PieceStats {
        source: piece.source.clone(),
        tracks: piece.n_tracks,
        notes: piece.notes.len(),
        right_notes: right,
        left_notes: left,
        steps: merged.len(),
        bars: merged.n_bars(),
        distinct_chords: chords.len(),
    }
}

fn print_table(report: &IngestReport) {
    println!(
        "{:<40} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7}",
        "file", "tracks", "notes", "right", "left", "bars", "chords"
    );
    for p in &report.pieces {
        let name = p.source.path.display().to_string();
        println!(
            "{name:<40} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7}",
            p.tracks, p.notes, p.right_notes, p.left_notes, p.bars, p.distinct_chords
        );
    }
    let notes: usize = report.pieces.iter().map(|p| p.notes).sum();
    let bars: usize = report.pieces.iter().map(|p| p.bars).sum();
    println!(
        "{} files, {notes} notes, {bars} bars at {} steps per bar",
        report.pieces.len(),
        report.grid.bar_len()
    );
}

pub fn ingest(args: IngestArgs) -> Outcome {
    let grid = args.grid.grid()?;
    if let Some(out) = &args.out {
        check_writable(&[out], args.force)?;
    }
    let pieces = load_pieces(&args.inputs, grid)?;
    let report = IngestReport { grid, pieces: pieces.iter().map(stats).collect() };
    print_table(&report);
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(out, json).data_ctx(|| format!("writing {}", out.display()))?;
        let sources: Vec<SourceRecord> = pieces.iter().map(|p| p.source.clone()).collect();
        record(&manifest_path(args.manifest.as_deref(), out), |m| {
            m.add_sources(&sources);
            m.artifacts.insert(
                out.clone(),
                Artifact {
                    kind: "ingest-report".into(),
                    command: "ingest".into(),
                    config_hash: config_hash(&grid),
                    inputs: args.inputs.clone(),
                },
            );
        })?;
        info!("wrote {}", out.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// MIDI files or directories (searched recursively)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Corpus JSON to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Which part to collect chords from
    #[arg(long, value_enum, default_value_t = Hand::Merged)]
    pub hand: Hand,
    /// Manifest to update (default: beside the output)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overwrite an existing corpus file
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct CorpusConfig {
    grid: GridConfig,
    hand: String,
}

pub fn build_corpus(args: BuildCorpusArgs) -> Outcome {
    let grid = args.grid.grid()?;
    check_writable(&[&args.out], args.force)?;
    let pieces = load_pieces(&args.inputs, grid)?;
    let rolls: Vec<_> = pieces.iter().map(|p| args.hand.roll(p)).collect();
    let corpus = ChordCorpus::build(&rolls);
    corpus.save(&args.out).data_ctx(|| format!("writing {}", args.out.display()))?;
    let sources: Vec<SourceRecord> = pieces.iter().map(|p| p.source.clone()).collect();
    let hash = config_hash(&CorpusConfig { grid, hand: format!("{:?}", args.hand) });
    record(&manifest_path(args.manifest.as_deref(), &args.out), |m| {
        m.add_sources(&sources);
        m.artifacts.insert(
            args.out.clone(),
            Artifact { kind: "corpus".into(), command: "build-corpus".into(), config_hash: hash, inputs: args.inputs.clone() },
        );
    })?;
    println!(
        "wrote {} ({} chords plus rest and unknown, from {} files)",
        args.out.display(),
        corpus.len() - 2,
        pieces.len()
    );
    Ok(())
}
