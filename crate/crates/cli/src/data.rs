use std::fs;
use std::path::{Path, PathBuf};

use dtrack_core::midi::{parse_midi, quantize, NoteEvent};
use dtrack_core::repr::{split_hands, to_pianoroll, GridConfig, Pianoroll};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{DataContext, Failure, Outcome};

/// How pieces are cut into training windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub steps_per_beat: u32,
    pub beats_per_bar: u32,
    pub in_bars: usize,
    pub out_bars: usize,
    /// Window start spacing in steps; defaults to one bar.
    pub stride: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let grid = GridConfig::default();
        Self {
            steps_per_beat: grid.steps_per_beat,
            beats_per_bar: grid.beats_per_bar,
            in_bars: 4,
            out_bars: 4,
            stride: None,
        }
    }
}

impl DataConfig {
    pub fn grid(&self) -> GridConfig {
        GridConfig {
            steps_per_beat: self.steps_per_beat,
            beats_per_bar: self.beats_per_bar,
        }
    }

    pub fn stride_steps(&self) -> usize {
        self.stride.unwrap_or_else(|| self.grid().bar_len())
    }

    pub fn validate(&self) -> Outcome {
        if self.steps_per_beat == 0 || self.beats_per_bar == 0 {
            return Err(Failure::usage("steps per beat and beats per bar must be positive"));
        }
        if self.in_bars == 0 || self.out_bars == 0 {
            return Err(Failure::usage("window bar counts must be positive"));
        }
        if self.stride == Some(0) {
            return Err(Failure::usage("stride must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// A parsed, quantized MIDI file with its hands rasterized to equal length.
#[derive(Debug, Clone)]
pub struct Piece {
    pub source: SourceRecord,
    pub n_tracks: usize,
    /// Quantized notes, in grid steps.
    pub notes: Vec<NoteEvent>,
    pub right: Pianoroll,
    pub left: Pianoroll,
}

impl Piece {
    pub fn merged(&self) -> Pianoroll {
        self.right.merge(&self.left)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Outcome {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .data_ctx(|| format!("reading directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .data_ctx(|| format!("reading directory {}", dir.display()))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            walk(&path, out)?;
        } else if is_midi(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Expands directories (recursively, sorted) into their `.mid`/`.midi` files.
/// Explicit file arguments are kept whatever their extension.
pub fn collect_midi(inputs: &[PathBuf]) -> Outcome<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            walk(input, &mut out)?;
        } else if input.is_file() {
            out.push(input.clone());
        } else {
            return Err(Failure::data(format!("{} does not exist", input.display())));
        }
    }
    if out.is_empty() {
        let names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
        return Err(Failure::data(format!("no MIDI files found in {}", names.join(", "))));
    }
    Ok(out)
}

fn pad(roll: Pianoroll, len: usize) -> Pianoroll {
    let grid = roll.grid;
    let mut rows = roll.into_rows();
    rows.resize(len, Default::default());
    Pianoroll::new(rows, grid)
}

pub fn load_piece(path: &Path, grid: GridConfig) -> Outcome<Piece> {
    let bytes = fs::read(path).data_ctx(|| format!("reading {}", path.display()))?;
    let song = parse_midi(&bytes).data_ctx(|| format!("parsing {}", path.display()))?;
    let notes = quantize(&song, grid.steps_per_beat);
    let (right, left) = split_hands(&notes);
    let right = to_pianoroll(&right, grid);
    let left = to_pianoroll(&left, grid);
    let len = right.len().max(left.len());
    Ok(Piece {
        source: SourceRecord {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        },
        n_tracks: song.notes.iter().map(|n| n.track + 1).max().unwrap_or(0),
        notes,
        right: pad(right, len),
        left: pad(left, len),
    })
}

pub fn load_pieces(inputs: &[PathBuf], grid: GridConfig) -> Outcome<Vec<Piece>> {
    collect_midi(inputs)?.iter().map(|p| load_piece(p, grid)).collect()
}
