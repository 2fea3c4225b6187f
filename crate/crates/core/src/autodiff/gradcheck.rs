use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::Result;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Fixed projection weights that reduce a non-scalar output to a scalar
/// without letting coordinates cancel.
fn projection(n: usize) -> Tensor {
    Tensor::vector((0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7 + 0.3).sin()).collect())
}

fn scalar_output(tape: &mut Tape, out: Var) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    if n == 1 {
        return Ok(out);
    }
    let flat = tape.reshape(out, vec![n])?;
    let w = tape.constant(projection(n));
    let weighted = tape.mul(flat, w)?;
    tape.sum(weighted)
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let s = scalar_output(&mut tape, out)?;
    Ok(tape.value(s).item())
}

/// Largest per-coordinate relative error between the tape gradient of `f`
/// and central differences `(f(x + eps) - f(x - eps)) / 2 eps`, over every
/// coordinate of every input. Non-scalar outputs are reduced by a fixed
/// weighted sum first.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let s = scalar_output(&mut tape, out)?;
    let adjoints = tape.backward(s)?;

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = adjoints.get_or_zeros(*var);
        for j in 0..inputs[k].len() {
            let x0 = inputs[k].data()[j];
            probe[k].data_mut()[j] = x0 + eps;
            let up = evaluate(&f, &probe)?;
            probe[k].data_mut()[j] = x0 - eps;
            let down = evaluate(&f, &probe)?;
            probe[k].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
    }
    Ok(worst)
}
