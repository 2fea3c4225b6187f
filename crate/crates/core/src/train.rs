//! Mini-batch Adam training with a scheduled teacher-forcing rate.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{clip_global_norm, Adam, AutodiffError, Binding, Tape, Tensor, Var};
use crate::models::{sequence_loss, Arch, Model, ModelError, Representation, Token, GENERATOR_PREFIX, MLP_PREFIX};
use crate::repr::{Frame, Pianoroll, WindowPair};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("teacher-forcing rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset is {data}, model expects {model}")]
    RepresentationMismatch { data: Representation, model: Representation },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("generator parameters changed while frozen")]
    FrozenParamsChanged,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl TrainError {
    /// Whether the failure is numerical rather than a bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteLoss { .. }
                | TrainError::Autodiff(AutodiffError::NonFiniteValue(_))
                | TrainError::Model(ModelError::Autodiff(AutodiffError::NonFiniteValue(_)))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    BinaryCrossEntropy,
}

impl LossKind {
    pub fn for_representation(r: Representation) -> Self {
        match r {
            Representation::Embedding => LossKind::CrossEntropy,
            Representation::Pianoroll => LossKind::BinaryCrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualTrackMode {
    /// Generator first, then the MLP with the generator frozen.
    #[default]
    Sequential,
    /// Generator and MLP losses summed and optimised together.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// `(epoch_start, p)` pairs; `None` means the default schedule for
    /// `epochs`.
    pub tf_schedule: Option<Vec<(usize, f64)>>,
    /// Must agree with the model's representation when set.
    pub loss: Option<LossKind>,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub dual_track_mode: DualTrackMode,
    /// Right/left frame pairs per left-hand MLP update.
    pub mlp_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch_size: 4,
            tf_schedule: None,
            loss: None,
            clip_norm: Some(5.0),
            seed: 0,
            dual_track_mode: DualTrackMode::Sequential,
            mlp_batch_size: 256,
        }
    }
}

/// `[(0, 0.0), (E/2, 0.2), (3E/4, 0.5)]`.
pub fn default_schedule(epochs: usize) -> Vec<(usize, f64)> {
    let mut s = vec![(0, 0.0)];
    for (start, p) in [(epochs / 2, 0.2), (3 * epochs / 4, 0.5)] {
        if start > s.last().unwrap().0 {
            s.push((start, p));
        }
    }
    s
}

impl TrainConfig {
    pub fn schedule(&self) -> Vec<(usize, f64)> {
        self.tf_schedule.clone().unwrap_or_else(|| default_schedule(self.epochs))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 || self.mlp_batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {}", self.lr));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip norm {c}"));
            }
        }
        let schedule = self.schedule();
        if schedule.is_empty() {
            return bad("empty teacher-forcing schedule".into());
        }
        for w in schedule.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("schedule epochs must be strictly increasing".into());
            }
        }
        if let Some(&(_, p)) = schedule.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(TrainError::InvalidRate(p));
        }
        Ok(())
    }
}

/// Rate of the last schedule entry starting at or before `epoch`; 0 before
/// the first entry.
pub fn tf_rate_at(schedule: &[(usize, f64)], epoch: usize) -> f64 {
    schedule
        .iter()
        .take_while(|(start, _)| *start <= epoch)
        .last()
        .map_or(0.0, |&(_, p)| p)
}

/// One teacher-forcing coin: `true` (feed the model's own output) with
/// probability `p`. Always consumes exactly one draw.
pub fn tf_decide<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<bool, TrainError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(TrainError::InvalidRate(p));
    }
    Ok(rng.gen::<f64>() < p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dataset {
    Chords(Vec<WindowPair<usize>>),
    Frames(Vec<WindowPair<Frame>>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Chords(w) => w.len(),
            Dataset::Frames(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn representation(&self) -> Representation {
        match self {
            Dataset::Chords(_) => Representation::Embedding,
            Dataset::Frames(_) => Representation::Pianoroll,
        }
    }
}

/// Windows for the sequence model plus, for dual-track models, aligned
/// (right frame, left frame) pairs for the MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub windows: Dataset,
    pub hand_pairs: Vec<(Frame, Frame)>,
}

/// Step-aligned `(right[t], left[t])` pairs over the shorter roll.
pub fn hand_pairs(right: &Pianoroll, left: &Pianoroll) -> Vec<(Frame, Frame)> {
    right.rows().iter().copied().zip(left.rows().iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean sequence loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Mean left-hand MLP loss per epoch (dual-track only).
    pub mlp_epoch_loss: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
    pub wall_time: Duration,
    /// Generator checksum before and after the frozen MLP phase.
    pub frozen_checksum: Option<(u64, u64)>,
}

impl TrainReport {
    /// `epoch,loss` lines with a header.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.epoch_loss.iter().enumerate() {
            out.push_str(&format!("{e},{l}\n"));
        }
        out
    }
}

fn window_loss<T: Token>(
    model: &Model,
    tape: &mut Tape,
    binding: &Binding,
    pair: &WindowPair<T>,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Var, TrainError> {
    let mask = (0..pair.target.len())
        .map(|_| tf_decide(p, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let logits = model.forward(tape, binding, &pair.input, &pair.target, &mask)?;
    Ok(sequence_loss(tape, &logits, &pair.target)?)
}

fn mlp_loss(model: &Model, tape: &mut Tape, binding: &Binding, pairs: &[(Frame, Frame)]) -> Result<Var, TrainError> {
    let losses = pairs
        .iter()
        .map(|&(r, l)| {
            let logits = model.left_hand_logits(tape, binding, r)?;
            Ok(tape.binary_cross_entropy_loss(logits, &Tensor::vector(l.to_dense()))?)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(tape.mean_of(&losses)?)
}

struct Trainer<'a> {
    model: &'a mut Model,
    config: &'a TrainConfig,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl Trainer<'_> {
    /// Backward, clip and update; returns the loss value.
    fn update(&mut self, mut tape: Tape, binding: &Binding, loss: Var, epoch: usize, step: usize) -> Result<f64, TrainError> {
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, step });
        }
        let adjoints = tape.backward(loss)?;
        let mut grads = binding.gradients(&adjoints);
        if grads.values().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteLoss { epoch, step });
        }
        if let Some(c) = self.config.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        self.adam.step(self.model.params_mut(), &grads)?;
        Ok(value)
    }

    fn sequence_epochs<T: Token>(&mut self, windows: &[WindowPair<T>], pairs: &[(Frame, Frame)], joint: bool) -> Result<Vec<f64>, TrainError> {
        let schedule = self.config.schedule();
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut history = Vec::with_capacity(self.config.epochs);
        let mut mlp_cursor = 0;
        let mut step = 0;
        for epoch in 0..self.config.epochs {
            let p = tf_rate_at(&schedule, epoch);
            order.shuffle(&mut self.rng);
            let (mut total, mut count) = (0.0, 0usize);
            for batch in order.chunks(self.config.batch_size) {
                let mut tape = Tape::new();
                let binding = if joint {
                    self.model.params().bind(&mut tape)
                } else {
                    let model = &*self.model;
                    model.params().bind_where(&mut tape, |n| model.is_generator_param(n))
                };
                let losses = batch
                    .iter()
                    .map(|&i| window_loss(self.model, &mut tape, &binding, &windows[i], p, &mut self.rng))
                    .collect::<Result<Vec<_>, _>>()?;
                let seq = tape.mean_of(&losses)?;
                let seq_value = tape.value(seq).item();
                let loss = if joint && !pairs.is_empty() {
                    let n = self.config.mlp_batch_size.min(pairs.len());
                    let chunk: Vec<_> = (0..n).map(|j| pairs[(mlp_cursor + j) % pairs.len()]).collect();
                    mlp_cursor = (mlp_cursor + n) % pairs.len();
                    let m = mlp_loss(self.model, &mut tape, &binding, &chunk)?;
                    tape.add(seq, m)?
                } else {
                    seq
                };
                self.update(tape, &binding, loss, epoch, step)?;
                if !seq_value.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, step });
                }
                total += seq_value * batch.len() as f64;
                count += batch.len();
                step += 1;
            }
            let mean = total / count as f64;
            log::info!("epoch {epoch}: loss {mean:.5} (tf rate {p})");
            history.push(mean);
        }
        Ok(history)
    }

    fn mlp_epochs(&mut self, pairs: &[(Frame, Frame)]) -> Result<Vec<f64>, TrainError> {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut history = Vec::with_capacity(self.config.epochs);
        let mut step = 0;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut self.rng);
            let (mut total, mut count) = (0.0, 0usize);
            for batch in order.chunks(self.config.mlp_batch_size) {
                let mut tape = Tape::new();
                let binding = self.model.params().bind_where(&mut tape, |n| n.starts_with(MLP_PREFIX));
                let chunk: Vec<_> = batch.iter().map(|&i| pairs[i]).collect();
                let loss = mlp_loss(self.model, &mut tape, &binding, &chunk)?;
                total += self.update(tape, &binding, loss, epoch, step)? * batch.len() as f64;
                count += batch.len();
                step += 1;
            }
            let mean = total / count as f64;
            log::info!("mlp epoch {epoch}: loss {mean:.5}");
            history.push(mean);
        }
        Ok(history)
    }
}

/// Trains `model` in place. Dual-track models also train the left-hand MLP
/// on `data.hand_pairs`, after the generator (sequential mode) or together
/// with it (joint mode). When `checkpoint` is given, the final model is
/// saved there.
pub fn train(model: &mut Model, data: &TrainData, config: &TrainConfig, checkpoint: Option<&Path>) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let start = Instant::now();
    let repr = model.config().representation;
    if data.windows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.windows.representation() != repr {
        return Err(TrainError::RepresentationMismatch { data: data.windows.representation(), model: repr });
    }
    if let Some(loss) = config.loss {
        if loss != LossKind::for_representation(repr) {
            return Err(TrainError::InvalidConfig(format!("{loss:?} does not fit the {repr} representation")));
        }
    }
    let dual = model.config().arch == Arch::DualTrack;
    if dual && data.hand_pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let joint = dual && config.dual_track_mode == DualTrackMode::Joint;

    let mut trainer = Trainer {
        model,
        config,
        adam: Adam::new(config.lr),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    let pairs = if joint { &data.hand_pairs[..] } else { &[] };
    let epoch_loss = match &data.windows {
        Dataset::Chords(w) => trainer.sequence_epochs(w, pairs, joint)?,
        Dataset::Frames(w) => trainer.sequence_epochs(w, pairs, joint)?,
    };

    let mut mlp_epoch_loss = Vec::new();
    let mut frozen_checksum = None;
    if dual && !joint {
        let before = trainer.model.params().checksum_prefix(GENERATOR_PREFIX);
        mlp_epoch_loss = trainer.mlp_epochs(&data.hand_pairs)?;
        let after = trainer.model.params().checksum_prefix(GENERATOR_PREFIX);
        if before != after {
            return Err(TrainError::FrozenParamsChanged);
        }
        frozen_checksum = Some((before, after));
    }

    if let Some(path) = checkpoint {
        trainer.model.save(path)?;
    }
    Ok(TrainReport {
        epoch_loss,
        mlp_epoch_loss,
        checkpoint: checkpoint.map(Path::to_path_buf),
        wall_time: start.elapsed(),
        frozen_checksum,
    })
}

/// Fraction of target steps whose argmax feedback symbol equals the target,
/// under full teacher forcing.
pub fn teacher_forced_accuracy<T: Token>(model: &Model, windows: &[WindowPair<T>]) -> Result<f64, TrainError> {
    let (mut hits, mut total) = (0usize, 0usize);
    for pair in windows {
        let mut tape = Tape::new();
        let binding = model.params().bind_where(&mut tape, |_| false);
        let mask = vec![false; pair.target.len()];
        let logits = model.forward(&mut tape, &binding, &pair.input, &pair.target, &mask)?;
        for (&l, &t) in logits.iter().zip(&pair.target) {
            hits += usize::from(T::feedback(tape.value(l)) == t);
            total += 1;
        }
    }
    if total == 0 {
        return Err(TrainError::EmptyDataset);
    }
    Ok(hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelConfig};

    #[test]
    fn schedule_lookup() {
        let s = [(0, 0.0), (50, 0.2)];
        assert_eq!(tf_rate_at(&s, 49), 0.0);
        assert_eq!(tf_rate_at(&s, 50), 0.2);
        assert_eq!(tf_rate_at(&s, 10_000), 0.2);
        assert_eq!(default_schedule(100), vec![(0, 0.0), (50, 0.2), (75, 0.5)]);
        assert_eq!(default_schedule(1), vec![(0, 0.0)]);
    }

    #[test]
    fn tf_decide_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| !tf_decide(0.0, &mut rng).unwrap()));
        assert!((0..1000).all(|_| tf_decide(1.0, &mut rng).unwrap()));
        assert!(matches!(tf_decide(1.5, &mut rng), Err(TrainError::InvalidRate(_))));
        assert!(matches!(tf_decide(-0.1, &mut rng), Err(TrainError::InvalidRate(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig { tf_schedule: Some(vec![(0, 0.0), (0, 0.2)]), ..Default::default() };
        assert!(matches!(c.validate(), Err(TrainError::InvalidConfig(_))));
        c.tf_schedule = Some(vec![(0, 1.2)]);
        assert!(matches!(c.validate(), Err(TrainError::InvalidRate(_))));
        let parsed: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "lr": 0.01}"#).unwrap();
        assert_eq!((parsed.epochs, parsed.batch_size), (3, 4));
    }

    fn tiny(arch: Arch) -> Model {
        let mut c = ModelConfig::new(arch, Representation::Embedding).with_corpus_size(5);
        c.hidden_size = 6;
        c.embedding_size = 4;
        c.in_len = 4;
        c.out_len = 4;
        if arch == Arch::DualTrack {
            c.mlp_hidden = 8;
        }
        build_model(c, 1).unwrap()
    }

    fn chords() -> TrainData {
        TrainData {
            windows: Dataset::Chords(vec![
                WindowPair { input: vec![2, 2, 3, 3], target: vec![4, 4, 2, 2] },
                WindowPair { input: vec![3, 4, 4, 2], target: vec![2, 3, 3, 4] },
            ]),
            hand_pairs: vec![(Frame::from_pitches([72]), Frame::from_pitches([48])); 3],
        }
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut m = tiny(Arch::EncDec);
        let before = m.params().checksum();
        let c = TrainConfig { epochs: 1, lr: 0.0, ..Default::default() };
        let r = train(&mut m, &chords(), &c, None).unwrap();
        assert_eq!(r.epoch_loss.len(), 1);
        assert!(r.epoch_loss[0].is_finite());
        assert_eq!(m.params().checksum(), before);
    }

    #[test]
    fn same_seed_same_curve() {
        let c = TrainConfig { epochs: 4, lr: 1e-2, seed: 7, tf_schedule: Some(vec![(0, 0.3)]), ..Default::default() };
        let run = || {
            let mut m = tiny(Arch::AttnEncDec);
            let r = train(&mut m, &chords(), &c, None).unwrap();
            (r.epoch_loss.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), m.params().checksum())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        for arch in [Arch::SimpleLstm, Arch::EncDec, Arch::AttnEncDec] {
            let mut m = tiny(arch);
            let c = TrainConfig { epochs: 10, lr: 1e-2, batch_size: 2, tf_schedule: Some(vec![(0, 0.0)]), ..Default::default() };
            let r = train(&mut m, &chords(), &c, None).unwrap();
            assert!(r.epoch_loss.windows(2).all(|w| w[1] < w[0]), "{arch}: {:?}", r.epoch_loss);
        }
    }

    #[test]
    fn sequential_dual_track_freezes_generator() {
        let mut m = tiny(Arch::DualTrack);
        let c = TrainConfig { epochs: 3, lr: 1e-2, ..Default::default() };
        let gen_before = m.params().checksum_prefix(GENERATOR_PREFIX);
        let mlp_before = m.params().checksum_prefix(MLP_PREFIX);
        let r = train(&mut m, &chords(), &c, None).unwrap();
        let (a, b) = r.frozen_checksum.unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_before);
        assert_ne!(m.params().checksum_prefix(MLP_PREFIX), mlp_before);
        assert_eq!(r.mlp_epoch_loss.len(), 3);
    }

    #[test]
    fn joint_dual_track_moves_both() {
        let mut m = tiny(Arch::DualTrack);
        let c = TrainConfig { epochs: 2, lr: 1e-2, dual_track_mode: DualTrackMode::Joint, ..Default::default() };
        let mlp_before = m.params().checksum_prefix(MLP_PREFIX);
        let r = train(&mut m, &chords(), &c, None).unwrap();
        assert!(r.frozen_checksum.is_none());
        assert_ne!(m.params().checksum_prefix(MLP_PREFIX), mlp_before);
    }

    #[test]
    fn rejects_bad_data() {
        let mut m = tiny(Arch::EncDec);
        let empty = TrainData { windows: Dataset::Chords(vec![]), hand_pairs: vec![] };
        assert!(matches!(train(&mut m, &empty, &TrainConfig::default(), None), Err(TrainError::EmptyDataset)));
        let frames = TrainData {
            windows: Dataset::Frames(vec![WindowPair { input: vec![Frame::EMPTY; 4], target: vec![Frame::EMPTY; 4] }]),
            hand_pairs: vec![],
        };
        assert!(matches!(
            train(&mut m, &frames, &TrainConfig::default(), None),
            Err(TrainError::RepresentationMismatch { .. })
        ));
    }

    #[test]
    fn csv_format() {
        let r = TrainReport {
            epoch_loss: vec![1.5, 0.25],
            mlp_epoch_loss: vec![],
            checkpoint: None,
            wall_time: Duration::ZERO,
            frozen_checksum: None,
        };
        assert_eq!(r.loss_csv(), "epoch,loss\n0,1.5\n1,0.25\n");
    }
}
