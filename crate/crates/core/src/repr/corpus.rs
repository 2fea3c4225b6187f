use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pianoroll::{Frame, GridConfig, Pianoroll};

/// Index of the empty chord.
pub const REST: usize = 0;
/// Index for chords absent from the corpus.
pub const UNK: usize = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid corpus file: {0}")]
    Invalid(String),
}

/// Bijection between distinct per-timestamp pitch sets and integer indices.
///
/// Indices 0 and 1 are reserved for rest and unknown chords; real chords are
/// numbered from 2 in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordCorpus {
    index_to_chord: Vec<Frame>,
    chord_to_index: HashMap<Frame, usize>,
}

/// One chord index per timestamp.
pub type ChordSequence = Vec<usize>;

impl Default for ChordCorpus {
    fn default() -> Self {
        Self {
            index_to_chord: vec![Frame::EMPTY, Frame::EMPTY],
            chord_to_index: HashMap::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    entries: Vec<CorpusEntry>,
}

#[derive(Serialize, Deserialize)]
struct CorpusEntry {
    index: usize,
    kind: EntryKind,
    pitches: Vec<u8>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum EntryKind {
    Rest,
    Unk,
    Chord,
}

impl ChordCorpus {
    pub fn build<'a, I: IntoIterator<Item = &'a Pianoroll>>(rolls: I) -> Self {
        let mut corpus = Self::default();
        for roll in rolls {
            for &frame in roll.rows() {
                corpus.insert(frame);
            }
        }
        corpus
    }

    fn insert(&mut self, frame: Frame) -> usize {
        if frame.is_empty() {
            return REST;
        }
        if let Some(&i) = self.chord_to_index.get(&frame) {
            return i;
        }
        let i = self.index_to_chord.len();
        self.index_to_chord.push(frame);
        self.chord_to_index.insert(frame, i);
        i
    }

    pub fn len(&self) -> usize {
        self.index_to_chord.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 2
    }

    pub fn index_of(&self, frame: Frame) -> usize {
        if frame.is_empty() {
            REST
        } else {
            self.chord_to_index.get(&frame).copied().unwrap_or(UNK)
        }
    }

    /// The pitch set for an index; rest, unknown and out-of-range indices
    /// decode to silence.
    pub fn chord(&self, index: usize) -> Frame {
        self.index_to_chord.get(index).copied().unwrap_or(Frame::EMPTY)
    }

    pub fn encode(&self, roll: &Pianoroll) -> ChordSequence {
        roll.rows().iter().map(|&f| self.index_of(f)).collect()
    }

    pub fn decode(&self, seq: &[usize], grid: GridConfig) -> Pianoroll {
        Pianoroll::new(seq.iter().map(|&i| self.chord(i)).collect(), grid)
    }

    pub fn to_json(&self) -> String {
        let entries = self
            .index_to_chord
            .iter()
            .enumerate()
            .map(|(index, frame)| CorpusEntry {
                index,
                kind: match index {
                    REST => EntryKind::Rest,
                    UNK => EntryKind::Unk,
                    _ => EntryKind::Chord,
                },
                pitches: frame.pitches().collect(),
            })
            .collect();
        serde_json::to_string_pretty(&CorpusFile { entries }).expect("corpus serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: CorpusFile = serde_json::from_str(text)?;
        let mut corpus = Self::default();
        for (pos, entry) in file.entries.iter().enumerate() {
            if entry.index != pos {
                return Err(CorpusError::Invalid(format!(
                    "entry {pos} has index {}",
                    entry.index
                )));
            }
            let expected = match pos {
                REST => EntryKind::Rest,
                UNK => EntryKind::Unk,
                _ => EntryKind::Chord,
            };
            if entry.kind != expected {
                return Err(CorpusError::Invalid(format!("entry {pos} has the wrong kind")));
            }
            if pos < 2 {
                continue;
            }
            if entry.pitches.is_empty() || entry.pitches.iter().any(|&p| p >= 128) {
                return Err(CorpusError::Invalid(format!("entry {pos} has invalid pitches")));
            }
            let frame = Frame::from_pitches(entry.pitches.iter().copied());
            if corpus.insert(frame) != pos {
                return Err(CorpusError::Invalid(format!("entry {pos} duplicates a chord")));
            }
        }
        if corpus.len() < 2 || file.entries.len() < 2 {
            return Err(CorpusError::Invalid("missing reserved entries".into()));
        }
        Ok(corpus)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridConfig {
        GridConfig::default()
    }

    fn roll(frames: &[&[u8]]) -> Pianoroll {
        Pianoroll::new(
            frames.iter().map(|p| Frame::from_pitches(p.iter().copied())).collect(),
            grid(),
        )
    }

    #[test]
    fn alternating_chord_and_rest() {
        let r = roll(&[&[60, 64, 67], &[], &[60, 64, 67], &[]]);
        let corpus = ChordCorpus::build([&r]);
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.encode(&roll(&[&[60, 64, 67], &[], &[60, 64, 67]])), vec![2, 0, 2]);
    }

    #[test]
    fn empty_input_has_reserved_only() {
        let corpus = ChordCorpus::build(std::iter::empty::<&Pianoroll>());
        assert_eq!(corpus.len(), 2);
        assert!(corpus.is_empty());
    }

    #[test]
    fn counts_distinct_sets() {
        let r = roll(&[&[60], &[62], &[60], &[60, 62], &[], &[62], &[61, 70]]);
        // distinct non-empty sets by enumeration
        let mut seen: Vec<Frame> = Vec::new();
        for &f in r.rows() {
            if !f.is_empty() && !seen.contains(&f) {
                seen.push(f);
            }
        }
        assert_eq!(ChordCorpus::build([&r]).len(), seen.len() + 2);
    }

    #[test]
    fn unseen_chord_is_unk() {
        let corpus = ChordCorpus::build([&roll(&[&[60, 64, 67]])]);
        assert_eq!(corpus.index_of(Frame::from_pitches([61])), UNK);
        assert_eq!(corpus.chord(UNK), Frame::EMPTY);
    }

    #[test]
    fn decode_inverts_encode_on_training_data() {
        let r = roll(&[&[60], &[62, 65], &[], &[60], &[1, 127]]);
        let corpus = ChordCorpus::build([&r]);
        assert_eq!(corpus.decode(&corpus.encode(&r), grid()), r);
    }

    #[test]
    fn deterministic_build() {
        let a = roll(&[&[60], &[62], &[64]]);
        let b = roll(&[&[64], &[65]]);
        assert_eq!(ChordCorpus::build([&a, &b]), ChordCorpus::build([&a, &b]));
        assert_eq!(ChordCorpus::build([&a, &b]).index_of(Frame::from_pitches([65])), 5);
    }

    #[test]
    fn json_round_trip() {
        let corpus = ChordCorpus::build([&roll(&[&[60, 64], &[67], &[]])]);
        let text = corpus.to_json();
        assert!(text.contains("\"rest\"") && text.contains("\"unk\""));
        assert_eq!(ChordCorpus::from_json(&text).unwrap(), corpus);
    }

    #[test]
    fn json_rejects_bad_reserved_entries() {
        let text = r#"{"entries":[{"index":0,"kind":"chord","pitches":[60]}]}"#;
        assert!(ChordCorpus::from_json(text).is_err());
    }
}
