//! Public-domain piano pieces in 3/4, two tracks (right hand first), built
//! note by note so the suite needs no binary fixtures.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dtrack_core::midi::{write_midi, MidiSong, NoteEvent};

pub const TICKS_PER_BEAT: u16 = 96;

/// `(midi pitch or 0 for rest, length in eighths)` per event.
type Line = &'static [(u8, u64)];

fn track(line: Line, track: usize) -> Vec<NoteEvent> {
    let eighth = u64::from(TICKS_PER_BEAT) / 2;
    let mut t = 0;
    let mut out = Vec::new();
    for &(pitch, eighths) in line {
        let d = eighths * eighth;
        if pitch > 0 {
            out.push(NoteEvent { track, velocity: 72, ..NoteEvent::new(pitch, t, d) });
        }
        t += d;
    }
    out
}

fn song(right: Line, left: Line) -> MidiSong {
    let mut notes = track(right, 0);
    notes.extend(track(left, 1));
    MidiSong::new(TICKS_PER_BEAT, notes)
}

const D3: u8 = 50;
const E3: u8 = 52;
const FS3: u8 = 54;
const G3: u8 = 55;
const A3: u8 = 57;
const B3: u8 = 59;
const C4: u8 = 60;
const D4: u8 = 62;
const E4: u8 = 64;
const FS4: u8 = 66;
const G4: u8 = 67;
const A4: u8 = 69;
const B4: u8 = 71;
const C5: u8 = 72;
const D5: u8 = 74;
const E5: u8 = 76;
const FS5: u8 = 78;
const G5: u8 = 79;

/// Minuet in G major (Petzold), first sixteen bars.
pub fn minuet_in_g() -> MidiSong {
    const RIGHT: Line = &[
        (D5, 2), (G4, 1), (A4, 1), (B4, 1), (C5, 1),
        (D5, 2), (G4, 2), (G4, 2),
        (E5, 2), (C5, 1), (D5, 1), (E5, 1), (FS5, 1),
        (G5, 2), (G4, 2), (G4, 2),
        (C5, 2), (D5, 1), (C5, 1), (B4, 1), (A4, 1),
        (B4, 2), (C5, 1), (B4, 1), (A4, 1), (G4, 1),
        (FS4, 2), (G4, 1), (A4, 1), (B4, 1), (G4, 1),
        (A4, 6),
        (D5, 2), (G4, 1), (A4, 1), (B4, 1), (C5, 1),
        (D5, 2), (G4, 2), (G4, 2),
        (E5, 2), (C5, 1), (D5, 1), (E5, 1), (FS5, 1),
        (G5, 2), (G4, 2), (G4, 2),
        (C5, 2), (D5, 1), (C5, 1), (B4, 1), (A4, 1),
        (B4, 2), (C5, 1), (B4, 1), (A4, 1), (G4, 1),
        (A4, 2), (B4, 1), (A4, 1), (G4, 1), (FS4, 1),
        (G4, 6),
    ];
    const LEFT: Line = &[
        (G3, 4), (A3, 2),
        (B3, 6),
        (C4, 6),
        (B3, 6),
        (A3, 6),
        (G3, 6),
        (D4, 2), (B3, 2), (G3, 2),
        (D4, 2), (D3, 2), (C4, 2),
        (B3, 4), (A3, 2),
        (B3, 6),
        (C4, 6),
        (B3, 6),
        (A3, 6),
        (G3, 6),
        (D4, 2), (D3, 2), (FS3, 2),
        (G3, 6),
    ];
    song(RIGHT, LEFT)
}

/// Amazing Grace in G major, two verses of eight bars.
pub fn amazing_grace() -> MidiSong {
    const RIGHT: Line = &[
        (G4, 4), (B4, 1), (G4, 1),
        (B4, 4), (A4, 2),
        (G4, 4), (E4, 2),
        (D4, 4), (D4, 2),
        (G4, 4), (B4, 1), (G4, 1),
        (B4, 4), (A4, 2),
        (D5, 6),
        (D5, 4), (B4, 2),
        (D5, 4), (B4, 1), (G4, 1),
        (B4, 4), (A4, 2),
        (G4, 4), (E4, 2),
        (D4, 4), (D4, 2),
        (G4, 4), (B4, 1), (G4, 1),
        (B4, 4), (A4, 2),
        (G4, 6),
        (G4, 6),
    ];
    const LEFT: Line = &[
        (G3, 6),
        (G3, 6),
        (C4, 6),
        (G3, 6),
        (G3, 6),
        (E3, 6),
        (D3, 6),
        (D3, 6),
        (G3, 6),
        (G3, 6),
        (C4, 6),
        (G3, 6),
        (G3, 6),
        (D3, 6),
        (G3, 6),
        (G3, 6),
    ];
    song(RIGHT, LEFT)
}

/// Writes both pieces into `dir` and returns their paths.
pub fn write_corpus(dir: &Path) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    [("minuet_in_g.mid", minuet_in_g()), ("amazing_grace.mid", amazing_grace())]
        .into_iter()
        .map(|(name, s)| {
            let p = dir.join(name);
            std::fs::write(&p, write_midi(&s)).unwrap();
            p
        })
        .collect()
}
