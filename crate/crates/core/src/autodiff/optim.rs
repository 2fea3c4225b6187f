use std::collections::BTreeMap;

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use super::{shape_err, AutodiffError, Result};

fn param_for<'a>(params: &'a mut ParamStore, name: &str, grad: &Tensor) -> Result<&'a mut Tensor> {
    let p = params
        .get_mut(name)
        .ok_or_else(|| AutodiffError::MissingParameter(name.to_string()))?;
    if p.shape() != grad.shape() {
        return Err(shape_err(
            "optimizer",
            format!("{name}: param {:?} vs grad {:?}", p.shape(), grad.shape()),
        ));
    }
    Ok(p)
}

/// Plain gradient descent: `p <- p - lr * g` for every gradient supplied.
pub fn sgd_step(params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
    for (name, g) in grads {
        let p = param_for(params, name, g)?;
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.values().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates every parameter that has an entry in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (name, g) in grads {
            param_for(params, name, g)?;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let p = param_for(params, name, g)?;
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
