use crate::repr::{ChordCorpus, GridConfig, Pianoroll};
use crate::sample::{generate, SampleConfig, SampleError, Window};

use super::{Arch, Model, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub struct DualTrackOutput {
    pub right: Pianoroll,
    pub left: Pianoroll,
    /// `right OR left` at every step.
    pub merged: Pianoroll,
    pub saturated_at: Option<usize>,
}

/// Generates the right hand with the wrapped generator, then predicts each
/// left-hand frame from the right-hand frame at the same step.
///
/// Chord-index generators need `corpus` to decode their output to frames.
pub fn dual_track_generate(
    model: &Model,
    seed: &Window,
    config: &SampleConfig,
    corpus: Option<&ChordCorpus>,
    grid: GridConfig,
) -> Result<DualTrackOutput, SampleError> {
    if model.config().arch != Arch::DualTrack {
        return Err(ModelError::WrongArch(Arch::DualTrack).into());
    }
    let generated = generate(model, seed, config)?;
    let right = match generated.output {
        Window::Frames(rows) => Pianoroll::new(rows, grid),
        Window::Chords(seq) => {
            let corpus = corpus.ok_or_else(|| SampleError::InvalidConfig("chord generator needs a corpus".into()))?;
            corpus.decode(&seq, grid)
        }
    };
    let left_rows = right
        .rows()
        .iter()
        .map(|&f| model.predict_left(f))
        .collect::<Result<Vec<_>, _>>()?;
    let left = Pianoroll::new(left_rows, grid);
    let merged = right.merge(&left);
    Ok(DualTrackOutput {
        right,
        left,
        merged,
        saturated_at: generated.saturated_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelConfig, Representation};
    use crate::repr::Frame;
    use crate::sample::Strategy;

    fn model() -> Model {
        let mut c = ModelConfig::new(Arch::DualTrack, Representation::Pianoroll);
        c.hidden_size = 4;
        c.mlp_hidden = 6;
        c.in_len = 4;
        c.out_len = 4;
        build_model(c, 2).unwrap()
    }

    #[test]
    fn merged_is_union_of_hands() {
        let m = model();
        let seed = Window::Frames((0..4).map(|t| Frame::from_pitches([48 + t, 72])).collect());
        let out = dual_track_generate(&m, &seed, &SampleConfig::new(Strategy::Gumbel, 12, 5), None, GridConfig::default())
            .unwrap();
        assert_eq!(out.merged.len(), 12);
        for t in 0..12 {
            let (r, l, mg) = (out.right.rows()[t], out.left.rows()[t], out.merged.rows()[t]);
            assert_eq!(mg, r.union(l));
            assert!(mg.count() >= r.count());
            assert_eq!(l, m.predict_left(r).unwrap());
        }
    }

    #[test]
    fn rejects_single_track_model() {
        let mut c = ModelConfig::new(Arch::EncDec, Representation::Pianoroll);
        c.hidden_size = 4;
        c.in_len = 4;
        let m = build_model(c, 0).unwrap();
        let seed = Window::Frames(vec![Frame::EMPTY; 4]);
        let err = dual_track_generate(&m, &seed, &SampleConfig::new(Strategy::Greedy, 2, 0), None, GridConfig::default());
        assert!(matches!(err, Err(SampleError::Model(ModelError::WrongArch(_)))));
    }
}
