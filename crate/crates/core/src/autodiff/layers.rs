use rand::Rng;

use super::params::{Binding, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::{shape_err, Result};

const GATES: [&str; 4] = ["i", "f", "g", "o"];

/// Shape of one LSTM cell: per-gate `hidden x (input + hidden)` weights and
/// `hidden` biases for the input, forget, cell and output gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
}

/// An LSTM cell's parameters bound to a tape, gates in `i, f, g, o` order.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub weights: [Var; 4],
    pub biases: [Var; 4],
}

impl LstmParams {
    pub fn new(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
        }
    }

    pub fn num_elements(&self) -> usize {
        4 * (self.hidden_size * (self.input_size + self.hidden_size) + self.hidden_size)
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, forget bias 1, other biases 0.
    pub fn init<R: Rng>(&self, store: &mut ParamStore, prefix: &str, rng: &mut R) {
        let (h, d) = (self.hidden_size, self.input_size);
        let bound = 1.0 / ((d + h) as f64).sqrt();
        for gate in GATES {
            store.insert_uniform(format!("{prefix}.w_{gate}"), &[h, d + h], bound, rng);
            let bias = if gate == "f" { 1.0 } else { 0.0 };
            store.insert(format!("{prefix}.b_{gate}"), Tensor::filled(&[h], bias));
        }
    }

    pub fn bind(&self, binding: &Binding, prefix: &str) -> Result<LstmVars> {
        let w = |g: &str| binding.var(&format!("{prefix}.w_{g}"));
        let b = |g: &str| binding.var(&format!("{prefix}.b_{g}"));
        Ok(LstmVars {
            weights: [w("i")?, w("f")?, w("g")?, w("o")?],
            biases: [b("i")?, b("f")?, b("g")?, b("o")?],
        })
    }
}

/// One LSTM step: `c' = f*c + i*g`, `h' = o*tanh(c')` with sigmoid
/// `i, f, o` and tanh `g`, each gate an affine map of `[x; h]`.
pub fn lstm_cell_step(tape: &mut Tape, x: Var, h: Var, c: Var, params: &LstmVars) -> Result<(Var, Var)> {
    if tape.shape(h) != tape.shape(c) {
        return Err(shape_err(
            "lstm_cell_step",
            format!("h {:?} vs c {:?}", tape.shape(h), tape.shape(c)),
        ));
    }
    let xh = tape.concat(&[x, h])?;
    let mut pre = [xh; 4];
    for (k, slot) in pre.iter_mut().enumerate() {
        let z = tape.matvec(params.weights[k], xh)?;
        *slot = tape.add(z, params.biases[k])?;
    }
    let i = tape.sigmoid(pre[0])?;
    let f = tape.sigmoid(pre[1])?;
    let g = tape.tanh(pre[2])?;
    let o = tape.sigmoid(pre[3])?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next)?;
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Affine layer `w x + b` with `w: [out, in]`.
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearVars {
    pub fn init<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) {
        let bound = 1.0 / (input as f64).sqrt();
        store.insert_uniform(format!("{prefix}.w"), &[output, input], bound, rng);
        store.insert_uniform(format!("{prefix}.b"), &[output], bound, rng);
    }

    pub fn num_elements(input: usize, output: usize) -> usize {
        output * input + output
    }

    pub fn bind(binding: &Binding, prefix: &str) -> Result<Self> {
        Ok(Self {
            weight: binding.var(&format!("{prefix}.w"))?,
            bias: binding.var(&format!("{prefix}.b"))?,
        })
    }
}

pub fn linear(tape: &mut Tape, layer: &LinearVars, x: Var) -> Result<Var> {
    let z = tape.matvec(layer.weight, x)?;
    tape.add(z, layer.bias)
}

/// Dot-product attention: `softmax(enc . q)` weighted sum of the rows of
/// `enc_outputs` (`[T, H]`).
pub fn attention(tape: &mut Tape, dec_state: Var, enc_outputs: Var) -> Result<Var> {
    let enc_t = tape.transpose(enc_outputs)?;
    attention_with_transpose(tape, dec_state, enc_outputs, enc_t)
}

/// [`attention`] with the `[H, T]` transpose of the encoder outputs supplied,
/// so a decoder can reuse it across steps.
pub fn attention_with_transpose(tape: &mut Tape, dec_state: Var, enc_outputs: Var, enc_t: Var) -> Result<Var> {
    let scores = tape.matvec(enc_outputs, dec_state)?;
    let weights = tape.softmax(scores, 0)?;
    tape.matvec(enc_t, weights)
}
