//! The generator architectures and the dual-track left-hand MLP, assembled
//! from [`crate::autodiff`] layers.
//!
//! Every architecture shares one decoding loop. Decode step 0 consumes the
//! last frame of the input window; step `t > 0` consumes either the target
//! frame `t - 1` (teacher forcing) or the model's own step `t - 1` output,
//! as chosen by the per-step mask. Encoder-decoder models start the decoder
//! from the encoder's final `(h, c)`; `SimpleLstm` runs one stack over the
//! input window and straight on into the decode steps.

mod config;
mod dual;

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{
    attention_with_transpose, linear, load_checkpoint, lstm_cell_step, save_checkpoint, AutodiffError, Binding,
    CheckpointError, LinearVars, LstmParams, LstmVars, Padding, ParamStore, Tape, Tensor, Var,
};
use crate::repr::{Frame, REST};

pub use config::{Arch, ModelConfig, Representation};
pub use dual::{dual_track_generate, DualTrackOutput};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("model expects {expected} input, got {got}")]
    RepresentationMismatch {
        expected: Representation,
        got: Representation,
    },
    #[error("operation needs a {0} model")]
    WrongArch(Arch),
    #[error("window shape: {0}")]
    WindowShape(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("model config sidecar: {0}")]
    Sidecar(String),
    #[error("checkpoint does not match config: {0}")]
    IncompatibleCheckpoint(String),
}

/// Prefix of generator parameters inside a dual-track model.
pub const GENERATOR_PREFIX: &str = "gen.";
/// Prefix of left-hand MLP parameters inside a dual-track model.
pub const MLP_PREFIX: &str = "mlp.";

/// A per-step symbol a model consumes and predicts.
pub trait Token: Copy + PartialEq + Debug {
    const REPRESENTATION: Representation;

    /// Records the model input for this symbol.
    fn input(self, tape: &mut Tape, embed: Option<Var>) -> Result<Var, AutodiffError>;

    /// Deterministic feedback symbol from a step's output: argmax chord or
    /// the frame of pitches whose sigmoid reaches 0.5.
    fn feedback(logits: &Tensor) -> Self;

    /// Per-step training loss of `logits` against this target.
    fn step_loss(self, tape: &mut Tape, logits: Var) -> Result<Var, AutodiffError>;

    fn is_rest(self) -> bool;
}

impl Token for usize {
    const REPRESENTATION: Representation = Representation::Embedding;

    fn input(self, tape: &mut Tape, embed: Option<Var>) -> Result<Var, AutodiffError> {
        tape.embedding(embed.expect("embedding model has a table"), self)
    }

    fn feedback(logits: &Tensor) -> Self {
        crate::sample::argmax(logits.data())
    }

    fn step_loss(self, tape: &mut Tape, logits: Var) -> Result<Var, AutodiffError> {
        tape.cross_entropy_loss(logits, self)
    }

    fn is_rest(self) -> bool {
        self == REST
    }
}

impl Token for Frame {
    const REPRESENTATION: Representation = Representation::Pianoroll;

    fn input(self, tape: &mut Tape, _embed: Option<Var>) -> Result<Var, AutodiffError> {
        Ok(tape.constant(Tensor::vector(self.to_dense())))
    }

    fn feedback(logits: &Tensor) -> Self {
        threshold_frame(logits.data(), 0.0)
    }

    fn step_loss(self, tape: &mut Tape, logits: Var) -> Result<Var, AutodiffError> {
        tape.binary_cross_entropy_loss(logits, &Tensor::vector(self.to_dense()))
    }

    fn is_rest(self) -> bool {
        self.is_empty()
    }
}

/// Frame of the pitches whose activation is at least `cut`.
pub(crate) fn threshold_frame(values: &[f64], cut: f64) -> Frame {
    let mut f = Frame::EMPTY;
    for (p, &v) in values.iter().enumerate().take(128) {
        if v >= cut {
            f.set(p as u8, true);
        }
    }
    f
}

/// Tape handles for one forward pass of the sequence model.
struct Net {
    embed: Option<Var>,
    conv: Option<(Var, Var)>,
    encoder: Vec<LstmVars>,
    decoder: Vec<LstmVars>,
    head: LinearVars,
    attention: bool,
    hidden: usize,
}

struct MlpVars {
    hidden: LinearVars,
    out: LinearVars,
}

/// Parameters plus the config they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
}

/// Parameter names and shapes implied by a config, with seeded initial values.
fn init_params(config: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let prefix = if config.arch == Arch::DualTrack {
        GENERATOR_PREFIX
    } else {
        ""
    };
    let core = config.core_arch();
    let (h, e, layers) = (config.hidden_size, config.embedding_size, config.num_lstm_layers);

    if config.representation == Representation::Embedding {
        store.insert_uniform(format!("{prefix}embed"), &[config.corpus_size, e], 1.0 / (e as f64).sqrt(), &mut rng);
    }
    if core == Arch::CnnAttnEncDec {
        for (name, k) in [("conv_time", config.conv_time_kernel), ("conv_pitch", config.conv_pitch_kernel)] {
            store.insert_uniform(format!("{prefix}{name}.k"), &[k], 1.0 / (k as f64).sqrt(), &mut rng);
        }
    }
    let stack = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, first_input: usize| {
        for l in 0..layers {
            let d = if l == 0 { first_input } else { h };
            LstmParams::new(d, h).init(store, &format!("{prefix}{name}{l}"), rng);
        }
    };
    if core.has_encoder() {
        stack(&mut store, &mut rng, "enc", e);
        let dec_in = if core.has_attention() { e + h } else { e };
        stack(&mut store, &mut rng, "dec", dec_in);
    } else {
        stack(&mut store, &mut rng, "lstm", e);
    }
    LinearVars::init(&mut store, &format!("{prefix}head"), h, config.output_size(), &mut rng);

    if config.arch == Arch::DualTrack {
        LinearVars::init(&mut store, &format!("{MLP_PREFIX}hidden"), 128, config.mlp_hidden, &mut rng);
        LinearVars::init(&mut store, &format!("{MLP_PREFIX}out"), config.mlp_hidden, 128, &mut rng);
    }
    store
}

/// Builds a model with seeded initial parameters.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
    config.validate()?;
    let params = init_params(&config, seed);
    Ok(Model { config, params })
}

impl Model {
    /// Pairs a config with existing parameters, checking that every name
    /// and shape the config implies is present and nothing else is.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = init_params(&config, 0);
        for (name, t) in expected.iter() {
            match params.get(name) {
                None => return Err(ModelError::IncompatibleCheckpoint(format!("missing {name}"))),
                Some(p) if p.shape() != t.shape() => {
                    return Err(ModelError::IncompatibleCheckpoint(format!(
                        "{name}: expected {:?}, found {:?}",
                        t.shape(),
                        p.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = params.names().find(|n| expected.get(n).is_none()) {
            return Err(ModelError::IncompatibleCheckpoint(format!("unexpected tensor {extra}")));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_elements()
    }

    fn prefix(&self) -> &'static str {
        if self.config.arch == Arch::DualTrack {
            GENERATOR_PREFIX
        } else {
            ""
        }
    }

    /// Parameter-name filter selecting the sequence model (everything except
    /// the left-hand MLP).
    pub fn is_generator_param(&self, name: &str) -> bool {
        !name.starts_with(MLP_PREFIX)
    }

    fn net(&self, binding: &Binding) -> Result<Net, ModelError> {
        let p = self.prefix();
        let c = &self.config;
        let core = c.core_arch();
        let (e, h) = (c.embedding_size, c.hidden_size);
        let embed = match c.representation {
            Representation::Embedding => Some(binding.var(&format!("{p}embed"))?),
            Representation::Pianoroll => None,
        };
        let conv = if core == Arch::CnnAttnEncDec {
            Some((
                binding.var(&format!("{p}conv_time.k"))?,
                binding.var(&format!("{p}conv_pitch.k"))?,
            ))
        } else {
            None
        };
        let stack = |name: &str, first: usize| -> Result<Vec<LstmVars>, ModelError> {
            (0..c.num_lstm_layers)
                .map(|l| {
                    let d = if l == 0 { first } else { h };
                    Ok(LstmParams::new(d, h).bind(binding, &format!("{p}{name}{l}"))?)
                })
                .collect()
        };
        let (encoder, decoder) = if core.has_encoder() {
            let dec_in = if core.has_attention() { e + h } else { e };
            (stack("enc", e)?, stack("dec", dec_in)?)
        } else {
            (Vec::new(), stack("lstm", e)?)
        };
        Ok(Net {
            embed,
            conv,
            encoder,
            decoder,
            head: LinearVars::bind(binding, &format!("{p}head"))?,
            attention: core.has_attention(),
            hidden: h,
        })
    }

    fn check_token<T: Token>(&self) -> Result<(), ModelError> {
        if T::REPRESENTATION != self.config.representation {
            return Err(ModelError::RepresentationMismatch {
                expected: self.config.representation,
                got: T::REPRESENTATION,
            });
        }
        Ok(())
    }

    /// Runs the sequence model: consumes `input`, then decodes up to `steps`
    /// outputs. `feed(t, logits)` supplies the decoder input for step
    /// `t >= 1` given step `t - 1`'s logits, or `None` to stop early; step 0
    /// consumes the last input symbol. Returns the per-step logits.
    pub fn rollout<T: Token>(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        input: &[T],
        steps: usize,
        mut feed: impl FnMut(usize, &Tensor) -> Option<T>,
    ) -> Result<Vec<Var>, ModelError> {
        self.check_token::<T>()?;
        let Some(&last) = input.last() else {
            return Err(ModelError::WindowShape("empty input window".into()));
        };
        let net = self.net(binding)?;
        let zeros = Tensor::zeros(&[net.hidden]);
        let mut state: Vec<(Var, Var)> = (0..net.decoder.len())
            .map(|_| (tape.constant(zeros.clone()), tape.constant(zeros.clone())))
            .collect();

        let mut memory = None;
        if net.encoder.is_empty() {
            for &tok in &input[..input.len() - 1] {
                let x = tok.input(tape, net.embed)?;
                run_stack(tape, &net.decoder, &mut state, x)?;
            }
        } else {
            let encoded = self.encoder_inputs(tape, &net, input)?;
            let mut enc_state: Vec<(Var, Var)> = (0..net.encoder.len())
                .map(|_| (tape.constant(zeros.clone()), tape.constant(zeros.clone())))
                .collect();
            let mut outputs = Vec::with_capacity(encoded.len());
            for x in encoded {
                outputs.push(run_stack(tape, &net.encoder, &mut enc_state, x)?);
            }
            if net.attention {
                let flat = tape.concat(&outputs)?;
                let enc = tape.reshape(flat, vec![outputs.len(), net.hidden])?;
                let enc_t = tape.transpose(enc)?;
                memory = Some((enc, enc_t));
            }
            state = enc_state;
        }

        let mut logits = Vec::with_capacity(steps);
        let mut tok = last;
        for t in 0..steps {
            if t > 0 {
                let prev = tape.value(logits[t - 1]).clone();
                match feed(t, &prev) {
                    Some(next) => tok = next,
                    None => break,
                }
            }
            let mut x = tok.input(tape, net.embed)?;
            if let Some((enc, enc_t)) = memory {
                let query = state.last().expect("decoder has layers").0;
                let ctx = attention_with_transpose(tape, query, enc, enc_t)?;
                x = tape.concat(&[x, ctx])?;
            }
            let top = run_stack(tape, &net.decoder, &mut state, x)?;
            logits.push(linear(tape, &net.head, top)?);
        }
        Ok(logits)
    }

    fn encoder_inputs<T: Token>(&self, tape: &mut Tape, net: &Net, input: &[T]) -> Result<Vec<Var>, ModelError> {
        let Some((k_time, k_pitch)) = net.conv else {
            return input
                .iter()
                .map(|&tok| tok.input(tape, net.embed).map_err(ModelError::from))
                .collect();
        };
        let rows = input
            .iter()
            .map(|&tok| tok.input(tape, net.embed))
            .collect::<Result<Vec<_>, _>>()?;
        let flat = tape.concat(&rows)?;
        let width = tape.shape(rows[0])[0];
        let grid = tape.reshape(flat, vec![rows.len(), width])?;
        let a = tape.conv1d(grid, k_time, 0, Padding::Same)?;
        let a = tape.tanh(a)?;
        let b = tape.conv1d(a, k_pitch, 1, Padding::Same)?;
        let b = tape.tanh(b)?;
        (0..rows.len())
            .map(|t| {
                let row = tape.slice(b, t, 1)?;
                Ok(tape.reshape(row, vec![width])?)
            })
            .collect()
    }

    /// Teacher-forced forward pass over one window pair. At decode step `t`
    /// the input is `target[t - 1]` where `tf_mask[t]` is false and the
    /// model's own step `t - 1` feedback symbol where it is true.
    pub fn forward<T: Token>(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        input: &[T],
        target: &[T],
        tf_mask: &[bool],
    ) -> Result<Vec<Var>, ModelError> {
        let c = &self.config;
        if input.len() != c.in_len || target.len() != c.out_len || tf_mask.len() != c.out_len {
            return Err(ModelError::WindowShape(format!(
                "input {} / target {} / mask {}, config wants {} / {} / {}",
                input.len(),
                target.len(),
                tf_mask.len(),
                c.in_len,
                c.out_len,
                c.out_len
            )));
        }
        self.rollout(tape, binding, input, c.out_len, |t, prev| {
            Some(if tf_mask[t] { T::feedback(prev) } else { target[t - 1] })
        })
    }

    /// Left-hand pre-sigmoid activations for one right-hand frame.
    pub fn left_hand_logits(&self, tape: &mut Tape, binding: &Binding, right: Frame) -> Result<Var, ModelError> {
        if self.config.arch != Arch::DualTrack {
            return Err(ModelError::WrongArch(Arch::DualTrack));
        }
        let mlp = MlpVars {
            hidden: LinearVars::bind(binding, &format!("{MLP_PREFIX}hidden"))?,
            out: LinearVars::bind(binding, &format!("{MLP_PREFIX}out"))?,
        };
        let x = tape.constant(Tensor::vector(right.to_dense()));
        let z = linear(tape, &mlp.hidden, x)?;
        let z = tape.relu(z)?;
        Ok(linear(tape, &mlp.out, z)?)
    }

    /// Left-hand frame for a right-hand frame: pitches with
    /// `sigmoid(activation) >= 0.5`.
    pub fn predict_left(&self, right: Frame) -> Result<Frame, ModelError> {
        let mut tape = Tape::new();
        let binding = self.params.bind_where(&mut tape, |_| false);
        let logits = self.left_hand_logits(&mut tape, &binding, right)?;
        Ok(threshold_frame(tape.value(logits).data(), 0.0))
    }

    /// Writes the parameters as a DTCK file and the config as a JSON sidecar
    /// next to it (see [`config_sidecar_path`]).
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        save_checkpoint(&self.params, path)?;
        let json = serde_json::to_string_pretty(&self.config).map_err(|e| ModelError::Sidecar(e.to_string()))?;
        std::fs::write(config_sidecar_path(path), json).map_err(|e| ModelError::Sidecar(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(config_sidecar_path(path)).map_err(|e| ModelError::Sidecar(e.to_string()))?;
        let config: ModelConfig = serde_json::from_str(&text).map_err(|e| ModelError::Sidecar(e.to_string()))?;
        Self::from_parts(config, load_checkpoint(path)?)
    }
}

/// `model.dtck` -> `model.dtck.config.json`.
pub fn config_sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// Advances a stack of LSTM cells by one step; returns the top hidden state.
fn run_stack(tape: &mut Tape, layers: &[LstmVars], state: &mut [(Var, Var)], x: Var) -> Result<Var, AutodiffError> {
    let mut input = x;
    for (layer, s) in layers.iter().zip(state.iter_mut()) {
        let (h, c) = lstm_cell_step(tape, input, s.0, s.1, layer)?;
        *s = (h, c);
        input = h;
    }
    Ok(input)
}

/// Mean per-step loss of a logit sequence against its targets.
pub fn sequence_loss<T: Token>(tape: &mut Tape, logits: &[Var], target: &[T]) -> Result<Var, ModelError> {
    if logits.len() != target.len() || logits.is_empty() {
        return Err(ModelError::WindowShape(format!(
            "{} logits for {} targets",
            logits.len(),
            target.len()
        )));
    }
    let losses = logits
        .iter()
        .zip(target)
        .map(|(&l, &t)| t.step_loss(tape, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(tape.mean_of(&losses)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(arch: Arch, repr: Representation) -> ModelConfig {
        let mut c = ModelConfig::new(arch, repr).with_corpus_size(7);
        c.hidden_size = 4;
        if repr == Representation::Embedding {
            c.embedding_size = 3;
        }
        c.in_len = 6;
        c.out_len = 6;
        c.mlp_hidden = 5;
        c
    }

    #[test]
    fn simple_lstm_parameter_count() {
        for (e, corpus) in [(200usize, 10usize), (8, 10)] {
            let mut c = ModelConfig::new(Arch::SimpleLstm, Representation::Embedding).with_corpus_size(corpus);
            c.hidden_size = 8;
            c.embedding_size = e;
            let m = build_model(c, 3).unwrap();
            let h = 8;
            let lstm1 = 4 * (h * (e + h) + h);
            let lstm2 = 4 * (h * (h + h) + h);
            let embedding = corpus * e;
            let head = corpus * h + corpus;
            assert_eq!(m.num_parameters(), lstm1 + lstm2 + embedding + head);
        }
    }

    #[test]
    fn default_sizes() {
        let c = ModelConfig::new(Arch::AttnEncDec, Representation::Embedding);
        assert_eq!(c.embedding_size, 200);
        let c = ModelConfig::new(Arch::CnnAttnEncDec, Representation::Pianoroll);
        assert_eq!((c.embedding_size, c.conv_time_kernel, c.conv_pitch_kernel), (128, 10, 11));
        assert_eq!((c.in_len, c.out_len), (288, 288));
        assert_eq!(ModelConfig::new(Arch::SimpleLstm, Representation::Pianoroll).num_lstm_layers, 2);
    }

    #[test]
    fn same_seed_same_params() {
        for arch in Arch::ALL {
            let c = tiny(arch, Representation::Pianoroll);
            let a = build_model(c.clone(), 11).unwrap();
            let b = build_model(c.clone(), 11).unwrap();
            assert_eq!(a.params().checksum(), b.params().checksum());
            let d = build_model(c, 12).unwrap();
            assert_ne!(a.params().checksum(), d.params().checksum());
        }
    }

    #[test]
    fn cnn_with_embedding_is_invalid() {
        let c = ModelConfig::new(Arch::CnnAttnEncDec, Representation::Embedding).with_corpus_size(10);
        assert!(matches!(build_model(c, 0), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn dual_track_shapes() {
        let c = ModelConfig::new(Arch::DualTrack, Representation::Pianoroll);
        let m = build_model(c, 0).unwrap();
        assert_eq!(m.params().get("mlp.hidden.w").unwrap().shape(), &[256, 128]);
        assert_eq!(m.params().get("mlp.out.w").unwrap().shape(), &[128, 256]);
        assert!(m.params().get("gen.conv_time.k").is_some());
    }

    #[test]
    fn wrong_token_type_rejected() {
        let m = build_model(tiny(Arch::EncDec, Representation::Embedding), 0).unwrap();
        let mut tape = Tape::new();
        let b = m.params().bind(&mut tape);
        let frames = vec![Frame::EMPTY; 6];
        let err = m.forward(&mut tape, &b, &frames, &frames, &[false; 6]).unwrap_err();
        assert!(matches!(err, ModelError::RepresentationMismatch { .. }));
    }

    #[test]
    fn output_length_matches_window() {
        for arch in Arch::ALL {
            let m = build_model(tiny(arch, Representation::Pianoroll), 1).unwrap();
            let mut tape = Tape::new();
            let b = m.params().bind(&mut tape);
            let win: Vec<Frame> = (0..6).map(|t| Frame::from_pitches([60 + t as u8])).collect();
            for mask in [[false; 6], [true; 6]] {
                let logits = m.forward(&mut tape, &b, &win, &win, &mask).unwrap();
                assert_eq!(logits.len(), 6);
                assert_eq!(tape.shape(logits[0]), &[128]);
            }
        }
    }

    #[test]
    fn teacher_forced_forward_is_reproducible() {
        let m = build_model(tiny(Arch::AttnEncDec, Representation::Embedding), 5).unwrap();
        let run = || {
            let mut tape = Tape::new();
            let b = m.params().bind(&mut tape);
            let input = [2, 3, 4, 0, 5, 6];
            let target = [6, 5, 4, 3, 2, 0];
            let logits = m.forward(&mut tape, &b, &input, &target, &[false; 6]).unwrap();
            logits.iter().flat_map(|&l| tape.value(l).data().to_vec()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn teacher_forcing_ignores_own_predictions() {
        // Under an all-false mask, changing targets only changes logits from
        // the step after the change onwards.
        let m = build_model(tiny(Arch::EncDec, Representation::Embedding), 5).unwrap();
        let logits = |target: &[usize]| {
            let mut tape = Tape::new();
            let b = m.params().bind(&mut tape);
            let l = m.forward(&mut tape, &b, &[2, 3, 4, 5, 6, 2], target, &[false; 6]).unwrap();
            l.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>()
        };
        let a = logits(&[2, 2, 2, 2, 2, 2]);
        let b = logits(&[2, 2, 3, 2, 2, 2]);
        assert_eq!(a[..3], b[..3]);
        assert_ne!(a[3], b[3]);
    }

    #[test]
    fn save_load_forward_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dtck");
        let m = build_model(tiny(Arch::DualTrack, Representation::Pianoroll), 9).unwrap();
        m.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back, m);
        let out = |model: &Model| {
            let mut tape = Tape::new();
            let b = model.params().bind(&mut tape);
            let w: Vec<Frame> = (0..6).map(|t| Frame::from_pitches([50 + t as u8, 70])).collect();
            let l = model.forward(&mut tape, &b, &w, &w, &[false; 6]).unwrap();
            l.iter().flat_map(|&v| tape.value(v).data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>()
        };
        assert_eq!(out(&m), out(&back));
    }

    #[test]
    fn load_rejects_mismatched_config() {
        let m = build_model(tiny(Arch::EncDec, Representation::Pianoroll), 9).unwrap();
        let mut other = m.config().clone();
        other.hidden_size = 5;
        assert!(matches!(
            Model::from_parts(other, m.params().clone()),
            Err(ModelError::IncompatibleCheckpoint(_))
        ));
    }

    #[test]
    fn zero_mlp_gives_all_ones_left_frame() {
        let mut m = build_model(tiny(Arch::DualTrack, Representation::Pianoroll), 0).unwrap();
        for (name, t) in m.params_mut().iter_mut() {
            if name.starts_with(MLP_PREFIX) {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        assert_eq!(m.predict_left(Frame::EMPTY).unwrap().count(), 128);
    }
}
