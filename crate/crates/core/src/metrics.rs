//! Used pitch classes per bar (UPC) and qualified-note ratio (QN).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::NoteEvent;
use crate::repr::{from_pianoroll, Pianoroll};

/// Shortest duration, in grid steps, that counts as a qualified note.
pub const MIN_QUALIFIED_STEPS: u64 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("roll of {len} steps holds no whole bar of {bar} steps")]
    ZeroBars { len: usize, bar: usize },
    #[error("no notes to evaluate")]
    NoNotes,
    #[error("nothing to evaluate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub model: String,
    pub upc: f64,
    pub qn: f64,
}

/// Published comparison rows, displayed next to computed values.
pub fn reference_rows() -> Vec<Reference> {
    vec![
        Reference { model: "True Music".into(), upc: 9.83, qn: 0.987 },
        Reference { model: "MuseGAN".into(), upc: 4.57, qn: 0.64 },
    ]
}

/// Distinct pitch classes in each whole bar, and their mean. A trailing
/// partial bar is ignored; empty bars count as 0.
pub fn upc(roll: &Pianoroll) -> Result<(Vec<u8>, f64), MetricsError> {
    let bar = roll.bar_len();
    let n = roll.n_bars();
    if n == 0 {
        return Err(MetricsError::ZeroBars { len: roll.len(), bar });
    }
    let per_bar: Vec<u8> = roll.rows()[..n * bar]
        .chunks(bar)
        .map(|rows| {
            let mut classes = 0u16;
            for f in rows {
                for p in f.pitches() {
                    classes |= 1 << (p % 12);
                }
            }
            classes.count_ones() as u8
        })
        .collect();
    let mean = per_bar.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    Ok((per_bar, mean))
}

fn qualified(notes: &[NoteEvent]) -> usize {
    notes.iter().filter(|n| n.duration >= MIN_QUALIFIED_STEPS).count()
}

/// Fraction of notes lasting at least three grid steps.
pub fn qn(notes: &[NoteEvent]) -> Result<f64, MetricsError> {
    if notes.is_empty() {
        return Err(MetricsError::NoNotes);
    }
    Ok(qualified(notes) as f64 / notes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub upc_mean: f64,
    pub upc_per_bar: Vec<u8>,
    pub qn_ratio: f64,
    pub n_bars: usize,
    pub n_notes: usize,
    pub n_qualified: usize,
    pub references: Vec<Reference>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table with one row per model: computed values first, then
    /// the reference rows.
    pub fn to_table(&self, label: &str) -> String {
        let mut rows = vec![(label.to_string(), self.upc_mean, self.qn_ratio)];
        rows.extend(self.references.iter().map(|r| (r.model.clone(), r.upc, r.qn)));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:>6}  {:>7}\n", "Model", "UPC", "QN");
        for (name, u, q) in rows {
            out.push_str(&format!("{name:<width$}  {u:>6.2}  {:>6.1}%\n", q * 100.0));
        }
        out.push_str(&format!("({} bars, {} notes)\n", self.n_bars, self.n_notes));
        out
    }
}

/// Bar-weighted UPC and note-weighted QN over several rolls. Rolls shorter
/// than a bar contribute no bars but still contribute their notes.
pub fn evaluate(rolls: &[Pianoroll]) -> Result<MetricsReport, MetricsError> {
    if rolls.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut upc_per_bar = Vec::new();
    let (mut n_notes, mut n_qualified) = (0, 0);
    for roll in rolls {
        if roll.n_bars() > 0 {
            upc_per_bar.extend(upc(roll)?.0);
        }
        let notes = from_pianoroll(roll);
        n_notes += notes.len();
        n_qualified += qualified(&notes);
    }
    if upc_per_bar.is_empty() {
        let r = &rolls[0];
        return Err(MetricsError::ZeroBars { len: r.len(), bar: r.bar_len() });
    }
    if n_notes == 0 {
        return Err(MetricsError::NoNotes);
    }
    Ok(MetricsReport {
        upc_mean: upc_per_bar.iter().map(|&c| c as f64).sum::<f64>() / upc_per_bar.len() as f64,
        n_bars: upc_per_bar.len(),
        upc_per_bar,
        qn_ratio: n_qualified as f64 / n_notes as f64,
        n_notes,
        n_qualified,
        references: reference_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::{Frame, GridConfig};

    fn one_bar(pitches: &[u8]) -> Pianoroll {
        let grid = GridConfig::default();
        let mut roll = Pianoroll::empty(grid.bar_len(), grid);
        for (i, &p) in pitches.iter().enumerate() {
            roll.set(i, p, true);
        }
        roll
    }

    #[test]
    fn upc_examples() {
        assert_eq!(upc(&one_bar(&[60, 64, 67])).unwrap().0, vec![3]);
        assert_eq!(upc(&one_bar(&[60, 72])).unwrap().0, vec![1]);
        let all: Vec<u8> = (60..72).collect();
        assert_eq!(upc(&one_bar(&all)).unwrap().0, vec![12]);
        assert_eq!(upc(&one_bar(&[])).unwrap(), (vec![0], 0.0));
    }

    #[test]
    fn upc_needs_a_whole_bar() {
        let roll = Pianoroll::empty(71, GridConfig::default());
        assert_eq!(upc(&roll), Err(MetricsError::ZeroBars { len: 71, bar: 72 }));
    }

    #[test]
    fn upc_ignores_partial_trailing_bar() {
        let grid = GridConfig::default();
        let mut roll = Pianoroll::empty(100, grid);
        roll.set(0, 60, true);
        roll.set(80, 61, true);
        assert_eq!(upc(&roll).unwrap().0, vec![1]);
    }

    #[test]
    fn qn_examples() {
        let notes = |ds: &[u64]| ds.iter().map(|&d| NoteEvent::new(60, 0, d)).collect::<Vec<_>>();
        assert_eq!(qn(&notes(&[3, 4, 5])).unwrap(), 1.0);
        assert_eq!(qn(&notes(&[2, 3])).unwrap(), 0.5);
        assert_eq!(qn(&[]), Err(MetricsError::NoNotes));
    }

    #[test]
    fn evaluate_single_note_roll() {
        let r = evaluate(&[one_bar(&[60])]).unwrap();
        assert_eq!((r.n_notes, r.n_bars, r.qn_ratio), (1, 1, 0.0));
        assert_eq!(r.references[0].upc, 9.83);
        assert_eq!(r.references[0].qn, 0.987);
        assert_eq!(r.references[1].upc, 4.57);
        assert_eq!(r.references[1].qn, 0.64);
    }

    #[test]
    fn table_lists_every_row() {
        let grid = GridConfig::default();
        let roll = Pianoroll::new(vec![Frame::from_pitches([60]); 72], grid);
        let t = evaluate(&[roll]).unwrap().to_table("generated");
        assert!(t.contains("generated") && t.contains("True Music") && t.contains("MuseGAN"));
        assert!(t.contains("100.0%"));
    }

    #[test]
    fn evaluate_errors() {
        assert_eq!(evaluate(&[]), Err(MetricsError::EmptyInput));
        assert_eq!(evaluate(&[one_bar(&[])]), Err(MetricsError::NoNotes));
    }
}
