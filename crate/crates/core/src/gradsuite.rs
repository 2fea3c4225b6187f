//! Finite-difference checks of every tape primitive and of every
//! architecture's end-to-end training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{
    attention, grad_check, linear, lstm_cell_step, relative_error, AutodiffError, LinearVars, LstmVars, Padding,
    Tape, Tensor, Var,
};
use crate::models::{build_model, sequence_loss, Arch, Model, ModelConfig, ModelError, Representation, Token};
use crate::repr::{Frame, WindowPair};

pub const EPS: f64 = 1e-5;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Uniform values in `±[0.1, 1]`, away from the relu kink.
fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("non-empty shape")
}

type Primitive = (&'static str, Vec<Vec<usize>>, fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>);

fn primitives() -> Vec<Primitive> {
    vec![
        ("add", vec![vec![2, 3], vec![2, 3]], |t, v| t.add(v[0], v[1])),
        ("sub", vec![vec![4], vec![4]], |t, v| t.sub(v[0], v[1])),
        ("mul", vec![vec![2, 3], vec![2, 3]], |t, v| t.mul(v[0], v[1])),
        ("scale", vec![vec![5]], |t, v| t.scale(v[0], -1.7)),
        ("matmul", vec![vec![2, 3], vec![3, 4]], |t, v| t.matmul(v[0], v[1])),
        ("matvec", vec![vec![3, 4], vec![4]], |t, v| t.matvec(v[0], v[1])),
        ("transpose", vec![vec![2, 3]], |t, v| t.transpose(v[0])),
        ("reshape", vec![vec![2, 3]], |t, v| t.reshape(v[0], vec![3, 2])),
        ("sigmoid", vec![vec![6]], |t, v| t.sigmoid(v[0])),
        ("tanh", vec![vec![6]], |t, v| t.tanh(v[0])),
        ("relu", vec![vec![6]], |t, v| t.relu(v[0])),
        ("concat", vec![vec![2, 3], vec![1, 3]], |t, v| t.concat(&[v[0], v[1]])),
        ("slice", vec![vec![4, 2]], |t, v| t.slice(v[0], 1, 2)),
        ("softmax_axis0", vec![vec![3, 4]], |t, v| t.softmax(v[0], 0)),
        ("softmax_axis1", vec![vec![3, 4]], |t, v| t.softmax(v[0], 1)),
        ("embedding", vec![vec![5, 3]], |t, v| t.embedding(v[0], 2)),
        ("conv1d_valid", vec![vec![9], vec![4]], |t, v| t.conv1d(v[0], v[1], 0, Padding::Valid)),
        ("conv1d_same_time", vec![vec![12, 3], vec![10]], |t, v| t.conv1d(v[0], v[1], 0, Padding::Same)),
        ("conv1d_same_pitch", vec![vec![3, 13], vec![11]], |t, v| t.conv1d(v[0], v[1], 1, Padding::Same)),
        ("sum", vec![vec![2, 3]], |t, v| t.sum(v[0])),
        ("add_n", vec![vec![3], vec![3], vec![3]], |t, v| t.add_n(&[v[0], v[1], v[2]])),
        ("mean_of", vec![vec![1], vec![1]], |t, v| t.mean_of(&[v[0], v[1]])),
        ("mse_loss", vec![vec![4]], |t, v| t.mse_loss(v[0], &Tensor::vector(vec![0.5, -0.2, 0.0, 1.0]))),
        ("cross_entropy_loss", vec![vec![5]], |t, v| t.cross_entropy_loss(v[0], 3)),
        ("binary_cross_entropy_loss", vec![vec![4]], |t, v| {
            t.binary_cross_entropy_loss(v[0], &Tensor::vector(vec![1.0, 0.0, 0.0, 1.0]))
        }),
        ("lstm_cell", vec![vec![3], vec![2], vec![2], vec![2, 5], vec![2, 5], vec![2, 5], vec![2, 5], vec![2], vec![2], vec![2], vec![2]], |t, v| {
            let params = LstmVars { weights: [v[3], v[4], v[5], v[6]], biases: [v[7], v[8], v[9], v[10]] };
            let (h, c) = lstm_cell_step(t, v[0], v[1], v[2], &params)?;
            t.concat(&[h, c])
        }),
        ("linear", vec![vec![3, 4], vec![3], vec![4]], |t, v| {
            linear(t, &LinearVars { weight: v[0], bias: v[1] }, v[2])
        }),
        ("attention", vec![vec![3], vec![5, 3]], |t, v| attention(t, v[0], v[1])),
    ]
}

/// Checks every primitive on pseudo-random inputs drawn from `seed`.
pub fn primitive_suite(seed: u64) -> Result<Vec<CheckResult>, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    primitives()
        .into_iter()
        .map(|(name, shapes, f)| {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| random(s, &mut rng)).collect();
            Ok(CheckResult {
                name: name.to_string(),
                max_rel_error: grad_check(f, &inputs, EPS)?,
                tolerance: PRIMITIVE_TOLERANCE,
            })
        })
        .collect()
}

fn window_loss<T: Token>(model: &Model, pair: &WindowPair<T>, trainable: bool) -> Result<(Tape, Var, crate::autodiff::Binding), ModelError> {
    let mut tape = Tape::new();
    let binding = model.params().bind_where(&mut tape, |n| trainable && model.is_generator_param(n));
    let mask = vec![false; pair.target.len()];
    let logits = model.forward(&mut tape, &binding, &pair.input, &pair.target, &mask)?;
    let loss = sequence_loss(&mut tape, &logits, &pair.target)?;
    Ok((tape, loss, binding))
}

/// Random directions per parameter tensor in the end-to-end checks.
pub const DIRECTIONS: usize = 3;

/// Compares `grad . v` with `(f(x + eps v) - f(x - eps v)) / 2 eps` for
/// [`DIRECTIONS`] random `±1` directions `v` per parameter tensor.
///
/// Single coordinates of a model gradient can sit near 1e-9, below what a
/// central difference at `eps = 1e-5` resolves on an O(1) loss, so whole-model
/// checks use directional derivatives, one tensor at a time.
fn directional_check(
    model: &Model,
    grads: &crate::autodiff::Gradients,
    eps: f64,
    loss: impl Fn(&Model) -> Result<f64, ModelError>,
) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (name, grad) in grads {
        let x0 = model.params().get(name).expect("bound parameter").clone();
        for _ in 0..DIRECTIONS {
            let v: Vec<f64> = (0..grad.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let analytic: f64 = grad.data().iter().zip(&v).map(|(g, d)| g * d).sum();
            let mut at = |sign: f64| {
                let t = probe.params_mut().get_mut(name).unwrap();
                for ((p, &x), &d) in t.data_mut().iter_mut().zip(x0.data()).zip(&v) {
                    *p = x + sign * eps * d;
                }
                loss(&probe)
            };
            let numeric = (at(1.0)? - at(-1.0)?) / (2.0 * eps);
            worst = worst.max(relative_error(analytic, numeric));
        }
        *probe.params_mut().get_mut(name).unwrap() = x0;
    }
    Ok(worst)
}

/// Checks the gradient of the teacher-forced window loss with respect to
/// every generator parameter.
pub fn model_grad_check<T: Token>(model: &Model, pair: &WindowPair<T>, eps: f64) -> Result<f64, ModelError> {
    let (mut tape, loss, binding) = window_loss(model, pair, true)?;
    let grads = binding.gradients(&tape.backward(loss)?);
    directional_check(model, &grads, eps, |m| {
        let (tape, loss, _) = window_loss(m, pair, false)?;
        Ok(tape.value(loss).item())
    })
}

/// Same check for the left-hand MLP loss on one frame pair.
fn mlp_grad_check(model: &Model, right: Frame, left: Frame, eps: f64) -> Result<f64, ModelError> {
    let loss_of = |m: &Model, trainable: bool| -> Result<(Tape, Var, crate::autodiff::Binding), ModelError> {
        let mut tape = Tape::new();
        let binding = m.params().bind_where(&mut tape, |n| trainable && !m.is_generator_param(n));
        let logits = m.left_hand_logits(&mut tape, &binding, right)?;
        let loss = tape.binary_cross_entropy_loss(logits, &Tensor::vector(left.to_dense()))?;
        Ok((tape, loss, binding))
    };
    let (mut tape, loss, binding) = loss_of(model, true)?;
    let grads = binding.gradients(&tape.backward(loss)?);
    directional_check(model, &grads, eps, |m| {
        let (t, l, _) = loss_of(m, false)?;
        Ok(t.value(l).item())
    })
}

/// Tiny configuration (hidden 4, windows of 6) for one architecture.
pub fn tiny_config(arch: Arch, repr: Representation) -> ModelConfig {
    let mut c = ModelConfig::new(arch, repr).with_corpus_size(7);
    c.hidden_size = 4;
    if repr == Representation::Embedding {
        c.embedding_size = 3;
    }
    c.mlp_hidden = 4;
    c.in_len = 6;
    c.out_len = 6;
    c
}

/// Every architecture and representation it supports, at tiny sizes.
/// Parameters are redrawn from `±[0.1, 1]` before checking.
pub fn model_suite() -> Result<Vec<CheckResult>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let chords = WindowPair { input: vec![2, 3, 3, 4, 0, 5], target: vec![6, 2, 2, 3, 1, 4] };
    let frames = WindowPair {
        input: (0..6).map(|t| Frame::from_pitches([40 + t, 64, 67 + (t % 2)])).collect(),
        target: (0..6).map(|t| Frame::from_pitches([52 - t, 60 + 2 * t])).collect(),
    };
    let mut out = Vec::new();
    for arch in Arch::ALL {
        for repr in [Representation::Embedding, Representation::Pianoroll] {
            let config = tiny_config(arch, repr);
            if config.validate().is_err() {
                continue;
            }
            let mut model = build_model(config, 31)?;
            // Default init leaves gates near-linear; O(1) weights exercise
            // the nonlinearities.
            for (_, t) in model.params_mut().iter_mut() {
                *t = random(t.shape(), &mut rng);
            }
            let err = match repr {
                Representation::Embedding => model_grad_check(&model, &chords, EPS)?,
                Representation::Pianoroll => model_grad_check(&model, &frames, EPS)?,
            };
            out.push(CheckResult { name: format!("{arch}/{repr}"), max_rel_error: err, tolerance: MODEL_TOLERANCE });
            if arch == Arch::DualTrack {
                let err = mlp_grad_check(&model, frames.target[0], frames.input[1], EPS)?;
                out.push(CheckResult {
                    name: format!("{arch}/{repr}/left-mlp"),
                    max_rel_error: err,
                    tolerance: MODEL_TOLERANCE,
                });
            }
        }
    }
    Ok(out)
}
