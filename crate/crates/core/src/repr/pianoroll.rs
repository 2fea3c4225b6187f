use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::midi::{sort_notes, NoteEvent, DEFAULT_VELOCITY};

/// Width of the pitch axis.
pub const PITCHES: usize = 128;

/// Pitch at and above which a single-track note is assigned to the right hand.
const HAND_SPLIT_PITCH: u8 = 60;

/// The set of pitches sounding at one timestamp, one bit per MIDI pitch.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frame(pub u128);

impl Frame {
    pub const EMPTY: Frame = Frame(0);

    pub fn from_pitches<I: IntoIterator<Item = u8>>(pitches: I) -> Self {
        let mut f = Frame::EMPTY;
        for p in pitches {
            f.set(p, true);
        }
        f
    }

    pub fn contains(self, pitch: u8) -> bool {
        pitch < 128 && self.0 >> pitch & 1 == 1
    }

    pub fn set(&mut self, pitch: u8, on: bool) {
        assert!(pitch < 128, "pitch {pitch} out of range");
        if on {
            self.0 |= 1u128 << pitch;
        } else {
            self.0 &= !(1u128 << pitch);
        }
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// Sounding pitches in ascending order.
    pub fn pitches(self) -> impl Iterator<Item = u8> {
        (0u8..128).filter(move |&p| self.contains(p))
    }

    pub fn union(self, other: Frame) -> Frame {
        Frame(self.0 | other.0)
    }

    /// Dense 0/1 vector of length 128.
    pub fn to_dense(self) -> Vec<f64> {
        (0u8..128).map(|p| if self.contains(p) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.pitches()).finish()
    }
}

/// Time grid of the representation: steps per beat and beats per bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub steps_per_beat: u32,
    pub beats_per_bar: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            steps_per_beat: 24,
            beats_per_bar: 3,
        }
    }
}

impl GridConfig {
    pub fn bar_len(&self) -> usize {
        (self.steps_per_beat * self.beats_per_bar) as usize
    }

    /// Length in steps of a window spanning `bars` bars.
    pub fn window_len(&self, bars: usize) -> usize {
        bars * self.bar_len()
    }
}

/// Binary time x 128 pitch-activation matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pianoroll {
    rows: Vec<Frame>,
    pub grid: GridConfig,
}

impl Pianoroll {
    pub fn new(rows: Vec<Frame>, grid: GridConfig) -> Self {
        Self { rows, grid }
    }

    pub fn empty(len: usize, grid: GridConfig) -> Self {
        Self::new(vec![Frame::EMPTY; len], grid)
    }

    pub fn rows(&self) -> &[Frame] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Frame> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, t: usize, pitch: u8) -> bool {
        self.rows[t].contains(pitch)
    }

    pub fn set(&mut self, t: usize, pitch: u8, on: bool) {
        self.rows[t].set(pitch, on);
    }

    pub fn bar_len(&self) -> usize {
        self.grid.bar_len()
    }

    /// Number of complete bars.
    pub fn n_bars(&self) -> usize {
        self.rows.len() / self.bar_len()
    }

    /// Elementwise OR with another roll; the result spans the longer one.
    pub fn merge(&self, other: &Pianoroll) -> Pianoroll {
        let n = self.len().max(other.len());
        let rows = (0..n)
            .map(|t| {
                let a = self.rows.get(t).copied().unwrap_or_default();
                let b = other.rows.get(t).copied().unwrap_or_default();
                a.union(b)
            })
            .collect();
        Pianoroll::new(rows, self.grid)
    }
}

/// Rasterizes quantized notes. The roll length is the last note end rounded
/// up to a whole bar, so an empty note list gives an empty roll.
pub fn to_pianoroll(notes: &[NoteEvent], grid: GridConfig) -> Pianoroll {
    let bar = grid.bar_len();
    let end = notes.iter().map(|n| n.end() as usize).max().unwrap_or(0);
    let len = end.div_ceil(bar) * bar;
    let mut roll = Pianoroll::empty(len, grid);
    for n in notes {
        if n.pitch >= 128 {
            warn!("ignoring out-of-range pitch {}", n.pitch);
            continue;
        }
        for t in n.onset as usize..n.end() as usize {
            roll.rows[t].set(n.pitch, true);
        }
    }
    roll
}

/// Extracts one note per maximal run of active cells in each pitch column.
pub fn from_pianoroll(roll: &Pianoroll) -> Vec<NoteEvent> {
    let mut notes = Vec::new();
    for pitch in 0u8..128 {
        let mut start: Option<usize> = None;
        for t in 0..=roll.len() {
            let on = t < roll.len() && roll.rows[t].contains(pitch);
            match (on, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    notes.push(NoteEvent {
                        pitch,
                        onset: s as u64,
                        duration: (t - s) as u64,
                        velocity: DEFAULT_VELOCITY,
                        track: 0,
                    });
                    start = None;
                }
                _ => {}
            }
        }
    }
    sort_notes(&mut notes);
    notes
}

/// Splits notes into right-hand and left-hand parts.
///
/// With two or more non-empty tracks, the lowest-numbered non-empty track is
/// the right hand and every other track is the left hand. Otherwise notes at
/// or above middle C go right and the rest go left.
pub fn split_hands(notes: &[NoteEvent]) -> (Vec<NoteEvent>, Vec<NoteEvent>) {
    let first_track = notes.iter().map(|n| n.track).min();
    let multi_track = match first_track {
        Some(t) => notes.iter().any(|n| n.track != t),
        None => false,
    };
    if multi_track {
        let right_track = first_track.unwrap();
        notes.iter().partition(|n| n.track == right_track)
    } else {
        notes.iter().partition(|n| n.pitch >= HAND_SPLIT_PITCH)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grid_is_72_steps_per_bar() {
        let g = GridConfig::default();
        assert_eq!(g.bar_len(), 72);
        assert_eq!(g.window_len(4), 288);
    }

    #[test]
    fn single_note_rasterizes() {
        let roll = to_pianoroll(&[NoteEvent::new(60, 0, 3)], GridConfig::default());
        assert_eq!(roll.len(), 72);
        for t in 0..roll.len() {
            for p in 0u8..128 {
                assert_eq!(roll.get(t, p), p == 60 && t < 3, "t={t} p={p}");
            }
        }
    }

    #[test]
    fn empty_notes_give_empty_roll() {
        assert_eq!(to_pianoroll(&[], GridConfig::default()).len(), 0);
    }

    #[test]
    fn overlapping_notes_both_present() {
        let notes = [NoteEvent::new(60, 0, 6), NoteEvent::new(64, 0, 6)];
        let roll = to_pianoroll(&notes, GridConfig::default());
        for t in 0..6 {
            assert_eq!(roll.rows()[t].count(), 2);
            assert!(roll.get(t, 60) && roll.get(t, 64));
        }
        assert_eq!(roll.rows()[6].count(), 0);
        assert_eq!(from_pianoroll(&roll), notes.to_vec());
    }

    #[test]
    fn zero_roll_has_no_notes() {
        assert!(from_pianoroll(&Pianoroll::empty(144, GridConfig::default())).is_empty());
    }

    #[test]
    fn long_roll_rounds_to_bar() {
        let roll = to_pianoroll(&[NoteEvent::new(60, 70, 5)], GridConfig::default());
        assert_eq!(roll.len(), 144);
    }

    #[test]
    fn split_two_tracks() {
        let mut a = NoteEvent::new(40, 0, 4);
        a.track = 1;
        let mut b = NoteEvent::new(80, 0, 4);
        b.track = 2;
        let (right, left) = split_hands(&[a, b]);
        assert_eq!(right, vec![a]);
        assert_eq!(left, vec![b]);
    }

    #[test]
    fn split_by_pitch() {
        let notes = [NoteEvent::new(48, 0, 4), NoteEvent::new(72, 0, 4)];
        let (right, left) = split_hands(&notes);
        assert_eq!(right, vec![notes[1]]);
        assert_eq!(left, vec![notes[0]]);
    }

    #[test]
    fn frame_debug_lists_pitches() {
        assert_eq!(format!("{:?}", Frame::from_pitches([64, 60])), "{60, 64}");
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            raw in proptest::collection::vec((0u8..128, 0u64..100, 1u64..10, 0usize..3), 0..30)
        ) {
            let notes: Vec<_> = raw
                .into_iter()
                .map(|(p, o, d, tr)| NoteEvent { track: tr, ..NoteEvent::new(p, o, d) })
                .collect();
            let (right, left) = split_hands(&notes);
            let mut both: Vec<_> = right.into_iter().chain(left).collect();
            let mut orig = notes.clone();
            sort_notes(&mut both);
            sort_notes(&mut orig);
            prop_assert_eq!(both, orig);
        }

        #[test]
        fn roll_round_trip(bits in proptest::collection::vec(any::<u128>(), 0..4)) {
            let grid = GridConfig { steps_per_beat: 1, beats_per_bar: 1 };
            let roll = Pianoroll::new(bits.into_iter().map(Frame).collect(), grid);
            prop_assert_eq!(to_pianoroll(&from_pianoroll(&roll), grid), roll);
        }
    }
}
