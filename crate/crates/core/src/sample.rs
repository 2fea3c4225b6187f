//! Free-running generation with greedy, top-k and Gumbel-max decoding.

use std::fmt;
use std::str::FromStr;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Tensor};
use crate::models::{Model, ModelError, Representation, Token};
use crate::repr::{Frame, PITCHES};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("empty logit vector")]
    EmptyLogits,
    #[error("non-finite logit at index {0}")]
    NonFiniteValue(usize),
    #[error("k = {k} outside 1..={dim}")]
    InvalidK { k: usize, dim: usize },
    #[error("invalid sample config: {0}")]
    InvalidConfig(String),
    #[error("seed window has {got} steps, model expects {expected}")]
    SeedLength { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    TopK,
    Gumbel,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Greedy => "greedy",
            Strategy::TopK => "top-k",
            Strategy::Gumbel => "gumbel",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "top-k" | "topk" => Ok(Strategy::TopK),
            "gumbel" => Ok(Strategy::Gumbel),
            _ => Err(format!("unknown strategy {s:?} (greedy, top-k, gumbel)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub gumbel_scale: f64,
    /// Steps to generate.
    pub length: usize,
    /// Activation (post-sigmoid) at which a pianoroll pitch switches on.
    pub pianoroll_threshold: f64,
    /// Stop after this many consecutive rest steps and pad the remainder
    /// with rest. `None` disables the cutoff.
    pub rest_cutoff: Option<usize>,
    pub seed: u64,
}

impl SampleConfig {
    pub fn new(strategy: Strategy, length: usize, seed: u64) -> Self {
        Self {
            strategy,
            k: 5,
            gumbel_scale: 1.0,
            length,
            pianoroll_threshold: 0.5,
            rest_cutoff: Some(144),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if self.k == 0 {
            return Err(SampleError::InvalidK { k: 0, dim: 0 });
        }
        if !(self.gumbel_scale >= 0.0 && self.gumbel_scale.is_finite()) {
            return Err(SampleError::InvalidConfig(format!("gumbel scale {}", self.gumbel_scale)));
        }
        if !(self.pianoroll_threshold > 0.0 && self.pianoroll_threshold < 1.0) {
            return Err(SampleError::InvalidConfig(format!(
                "pianoroll threshold {} outside (0, 1)",
                self.pianoroll_threshold
            )));
        }
        if self.rest_cutoff == Some(0) {
            return Err(SampleError::InvalidConfig("rest cutoff must be positive".into()));
        }
        Ok(())
    }
}

/// Index of the largest value, lowest index on ties. NaN never wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

fn check(logits: &[f64]) -> Result<(), SampleError> {
    if logits.is_empty() {
        return Err(SampleError::EmptyLogits);
    }
    match logits.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SampleError::NonFiniteValue(i)),
        None => Ok(()),
    }
}

pub fn greedy_pick(logits: &[f64]) -> Result<usize, SampleError> {
    check(logits)?;
    Ok(argmax(logits))
}

/// Samples from the softmax restricted to the `k` largest logits (ties
/// resolved towards lower indices).
pub fn top_k_pick<R: Rng + ?Sized>(logits: &[f64], k: usize, rng: &mut R) -> Result<usize, SampleError> {
    check(logits)?;
    if k == 0 || k > logits.len() {
        return Err(SampleError::InvalidK { k, dim: logits.len() });
    }
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.truncate(k);
    let top = logits[order[0]];
    let weights: Vec<f64> = order.iter().map(|&i| (logits[i] - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (&i, &w) in order.iter().zip(&weights) {
        if u < w {
            return Ok(i);
        }
        u -= w;
    }
    Ok(*order.last().expect("k >= 1"))
}

/// One standard Gumbel draw, `-ln(-ln U)` with `U` uniform on (0, 1).
pub fn standard_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// `argmax_i(logits_i + scale * g_i)` with i.i.d. standard Gumbel `g_i`.
/// At `scale = 1` this samples exactly from `softmax(logits)`.
pub fn gumbel_pick<R: Rng + ?Sized>(logits: &[f64], scale: f64, rng: &mut R) -> Result<usize, SampleError> {
    check(logits)?;
    if scale == 0.0 {
        return Ok(argmax(logits));
    }
    let noisy: Vec<f64> = logits.iter().map(|&l| l + scale * standard_gumbel(rng)).collect();
    Ok(argmax(&noisy))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Multi-hot frame from 128 per-pitch activations.
///
/// Greedy thresholds each pitch. Gumbel runs a two-way Gumbel-max per pitch
/// (on vs off), which adds `scale * (g_on - g_off)` to the activation before
/// thresholding. Top-k restricts to the `k` highest activations and switches
/// each on with its own sigmoid probability.
pub fn sample_frame<R: Rng + ?Sized>(logits: &[f64], config: &SampleConfig, rng: &mut R) -> Result<Frame, SampleError> {
    check(logits)?;
    let tau = config.pianoroll_threshold;
    let cut = (tau / (1.0 - tau)).ln();
    let n = logits.len().min(PITCHES);
    let mut frame = Frame::EMPTY;
    match config.strategy {
        Strategy::Greedy => {
            for (p, &l) in logits[..n].iter().enumerate() {
                frame.set(p as u8, l >= cut);
            }
        }
        Strategy::Gumbel => {
            for (p, &l) in logits[..n].iter().enumerate() {
                let noise = config.gumbel_scale * (standard_gumbel(rng) - standard_gumbel(rng));
                frame.set(p as u8, l + noise >= cut);
            }
        }
        Strategy::TopK => {
            if config.k > n {
                return Err(SampleError::InvalidK { k: config.k, dim: n });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
            for &p in &order[..config.k] {
                let on = rng.gen::<f64>() < sigmoid(logits[p]);
                frame.set(p as u8, on);
            }
        }
    }
    Ok(frame)
}

/// A symbol that can be drawn from a model's per-step output.
pub trait Sampled: Token {
    const REST: Self;

    fn draw<R: Rng + ?Sized>(logits: &[f64], config: &SampleConfig, rng: &mut R) -> Result<Self, SampleError>;
}

impl Sampled for usize {
    const REST: Self = crate::repr::REST;

    fn draw<R: Rng + ?Sized>(logits: &[f64], config: &SampleConfig, rng: &mut R) -> Result<Self, SampleError> {
        match config.strategy {
            Strategy::Greedy => greedy_pick(logits),
            Strategy::TopK => top_k_pick(logits, config.k, rng),
            Strategy::Gumbel => gumbel_pick(logits, config.gumbel_scale, rng),
        }
    }
}

impl Sampled for Frame {
    const REST: Self = Frame::EMPTY;

    fn draw<R: Rng + ?Sized>(logits: &[f64], config: &SampleConfig, rng: &mut R) -> Result<Self, SampleError> {
        sample_frame(logits, config, rng)
    }
}

/// Input or output window in either representation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    Chords(Vec<usize>),
    Frames(Vec<Frame>),
}

impl Window {
    pub fn len(&self) -> usize {
        match self {
            Window::Chords(c) => c.len(),
            Window::Frames(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn representation(&self) -> Representation {
        match self {
            Window::Chords(_) => Representation::Embedding,
            Window::Frames(_) => Representation::Pianoroll,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation<O> {
    /// Exactly `config.length` steps.
    pub output: O,
    /// Step at which the rest cutoff fired; later steps are rest padding.
    pub saturated_at: Option<usize>,
}

/// Consumes `seed`, then decodes `config.length` steps, feeding each drawn
/// symbol back as the next decoder input.
pub fn generate_tokens<T: Sampled>(model: &Model, seed: &[T], config: &SampleConfig) -> Result<Generation<Vec<T>>, SampleError> {
    config.validate()?;
    let expected = model.config().in_len;
    if seed.len() != expected {
        return Err(SampleError::SeedLength { expected, got: seed.len() });
    }
    if config.length == 0 {
        return Ok(Generation { output: Vec::new(), saturated_at: None });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tape = Tape::new();
    let binding = model.params().bind_where(&mut tape, |_| false);
    let mut output: Vec<T> = Vec::with_capacity(config.length);
    let mut failure = None;
    let mut rests = 0usize;
    let mut saturated_at = None;

    let mut take = |logits: &Tensor, output: &mut Vec<T>| -> bool {
        match T::draw(logits.data(), config, &mut rng) {
            Ok(tok) => {
                rests = if tok.is_rest() { rests + 1 } else { 0 };
                output.push(tok);
                if config.rest_cutoff.is_some_and(|c| rests >= c) && output.len() < config.length {
                    saturated_at = Some(output.len());
                    return false;
                }
                true
            }
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    };

    let logits = model.rollout(&mut tape, &binding, seed, config.length, |_, prev| {
        if take(prev, &mut output) {
            output.last().copied()
        } else {
            None
        }
    })?;
    if output.len() < logits.len() {
        take(tape.value(logits[logits.len() - 1]), &mut output);
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(step) = saturated_at {
        log::warn!("generation saturated: {step} steps then rest padding");
    }
    output.resize(config.length, T::REST);
    Ok(Generation { output, saturated_at })
}

/// [`generate_tokens`] for a seed window of either representation.
pub fn generate(model: &Model, seed: &Window, config: &SampleConfig) -> Result<Generation<Window>, SampleError> {
    match seed {
        Window::Chords(s) => {
            let g = generate_tokens(model, s, config)?;
            Ok(Generation { output: Window::Chords(g.output), saturated_at: g.saturated_at })
        }
        Window::Frames(s) => {
            let g = generate_tokens(model, s, config)?;
            Ok(Generation { output: Window::Frames(g.output), saturated_at: g.saturated_at })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, Arch, ModelConfig};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_pick(&[0.1, 2.0, -1.0]).unwrap(), 1);
        assert_eq!(greedy_pick(&[3.0, 3.0]).unwrap(), 0);
        assert_eq!(greedy_pick(&[0.1 + 7.0, 2.0 + 7.0, -1.0 + 7.0]).unwrap(), 1);
        assert!(matches!(greedy_pick(&[]), Err(SampleError::EmptyLogits)));
        assert!(matches!(greedy_pick(&[0.0, f64::NAN]), Err(SampleError::NonFiniteValue(1))));
    }

    #[test]
    fn top_k_examples() {
        let mut r = rng(0);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..6).map(|_| r.gen_range(-3.0..3.0)).collect();
            assert_eq!(top_k_pick(&v, 1, &mut r).unwrap(), greedy_pick(&v).unwrap());
        }
        for _ in 0..5000 {
            assert_ne!(top_k_pick(&[5.0, 4.0, -100.0], 2, &mut r).unwrap(), 2);
        }
        assert!(matches!(top_k_pick(&[1.0], 2, &mut r), Err(SampleError::InvalidK { k: 2, dim: 1 })));
        assert!(matches!(top_k_pick(&[1.0], 0, &mut r), Err(SampleError::InvalidK { .. })));
    }

    #[test]
    fn gumbel_zero_scale_is_greedy() {
        let mut r = rng(1);
        for _ in 0..500 {
            let v: Vec<f64> = (0..5).map(|_| r.gen_range(-3.0..3.0)).collect();
            assert_eq!(gumbel_pick(&v, 0.0, &mut r).unwrap(), argmax(&v));
        }
    }

    #[test]
    fn frame_greedy_thresholds_at_half() {
        let mut logits = vec![-1.0; 128];
        logits[60] = 0.0;
        logits[64] = 2.0;
        let c = SampleConfig::new(Strategy::Greedy, 1, 0);
        assert_eq!(sample_frame(&logits, &c, &mut rng(0)).unwrap(), Frame::from_pitches([60, 64]));
    }

    #[test]
    fn frame_top_k_stays_in_top_set() {
        let mut c = SampleConfig::new(Strategy::TopK, 1, 0);
        c.k = 3;
        let logits: Vec<f64> = (0..128).map(|p| if p >= 125 { 50.0 } else { 40.0 }).collect();
        let mut r = rng(2);
        for _ in 0..200 {
            let f = sample_frame(&logits, &c, &mut r).unwrap();
            assert_eq!(f, Frame::from_pitches([125, 126, 127]));
        }
    }

    fn tiny_model(repr: Representation) -> Model {
        let mut c = ModelConfig::new(Arch::AttnEncDec, repr).with_corpus_size(6);
        c.hidden_size = 4;
        c.embedding_size = if repr == Representation::Embedding { 3 } else { 128 };
        c.in_len = 5;
        c.out_len = 5;
        build_model(c, 4).unwrap()
    }

    #[test]
    fn zero_length_is_empty() {
        let m = tiny_model(Representation::Embedding);
        let g = generate(&m, &Window::Chords(vec![2; 5]), &SampleConfig::new(Strategy::Gumbel, 0, 1)).unwrap();
        assert!(g.output.is_empty());
    }

    #[test]
    fn output_length_is_exact() {
        let m = tiny_model(Representation::Embedding);
        for strategy in [Strategy::Greedy, Strategy::TopK, Strategy::Gumbel] {
            for len in [1, 7, 30] {
                let mut c = SampleConfig::new(strategy, len, 3);
                c.k = 2;
                let g = generate(&m, &Window::Chords(vec![2, 3, 4, 5, 2]), &c).unwrap();
                assert_eq!(g.output.len(), len);
            }
        }
    }

    #[test]
    fn greedy_generation_is_reproducible() {
        let m = tiny_model(Representation::Pianoroll);
        let seed = Window::Frames((0..5).map(|t| Frame::from_pitches([60 + t])).collect());
        let c = SampleConfig::new(Strategy::Greedy, 20, 9);
        assert_eq!(generate(&m, &seed, &c).unwrap(), generate(&m, &seed, &c).unwrap());
    }

    #[test]
    fn rest_cutoff_pads_to_length() {
        // Push the head bias hard towards the rest index.
        let mut m = tiny_model(Representation::Embedding);
        m.params_mut().get_mut("head.b").unwrap().data_mut()[0] = 100.0;
        let mut c = SampleConfig::new(Strategy::Greedy, 40, 0);
        c.rest_cutoff = Some(4);
        let g = generate_tokens(&m, &[2usize, 3, 4, 5, 2], &c).unwrap();
        assert_eq!(g.saturated_at, Some(4));
        assert_eq!(g.output, vec![0; 40]);
    }

    #[test]
    fn seed_length_checked() {
        let m = tiny_model(Representation::Embedding);
        let err = generate(&m, &Window::Chords(vec![2; 4]), &SampleConfig::new(Strategy::Greedy, 3, 0)).unwrap_err();
        assert!(matches!(err, SampleError::SeedLength { expected: 5, got: 4 }));
    }
}
