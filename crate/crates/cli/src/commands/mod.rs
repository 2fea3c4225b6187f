pub mod evaluate;
pub mod generate;
pub mod gradcheck;
pub mod ingest;
pub mod train;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dtrack_core::repr::{GridConfig, Pianoroll};

use crate::data::Piece;
use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, Copy, Args)]
pub struct GridArgs {
    /// Grid steps per quarter-note beat
    #[arg(long, default_value_t = 24)]
    pub steps_per_beat: u32,
    /// Beats per bar
    #[arg(long, default_value_t = 3)]
    pub beats_per_bar: u32,
}

impl GridArgs {
    pub fn grid(&self) -> Outcome<GridConfig> {
        if self.steps_per_beat == 0 || self.beats_per_bar == 0 {
            return Err(Failure::usage("steps per beat and beats per bar must be positive"));
        }
        Ok(GridConfig {
            steps_per_beat: self.steps_per_beat,
            beats_per_bar: self.beats_per_bar,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Hand {
    /// Both hands combined
    Merged,
    /// Right hand (melody) only
    Right,
    /// Left hand only
    Left,
}

impl Hand {
    pub fn roll(self, piece: &Piece) -> Pianoroll {
        match self {
            Hand::Merged => piece.merged(),
            Hand::Right => piece.right.clone(),
            Hand::Left => piece.left.clone(),
        }
    }
}

/// Refuses to touch existing files unless `force` is set.
pub fn check_writable(paths: &[&Path], force: bool) -> Outcome {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Failure::usage(format!("{} already exists (pass --force to overwrite)", p.display()))),
        None => Ok(()),
    }
}

/// `model.dtck` + `.run.json` -> `model.dtck.run.json`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
