use std::collections::BTreeMap;

use rand::Rng;

use super::tape::{Adjoints, Tape, Var};
use super::tensor::Tensor;
use super::{AutodiffError, Result};

/// Gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

/// Named parameter tensors in deterministic (sorted) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

/// Parameters recorded as leaves on one tape.
#[derive(Debug, Clone, Default)]
pub struct Binding {
    vars: BTreeMap<String, (Var, bool)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    /// Inserts a tensor drawn from `uniform(-bound, bound)`.
    pub fn insert_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut R) {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).expect("init shape"));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Records every tensor on `tape`; all are trainable.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        self.bind_where(tape, |_| true)
    }

    /// Records every tensor on `tape`; those rejected by `trainable` become
    /// constants and receive no gradient.
    pub fn bind_where(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> Binding {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let train = trainable(name);
                let v = if train {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), (v, train))
            })
            .collect();
        Binding { vars }
    }

    /// FNV-1a over names and the bit patterns of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, t) in &self.tensors {
            feed(name.as_bytes());
            for v in t.data() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Checksum restricted to parameters whose name starts with `prefix`.
    pub fn checksum_prefix(&self, prefix: &str) -> u64 {
        let subset = ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        };
        subset.checksum()
    }
}

impl Binding {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .map(|(v, _)| *v)
            .ok_or_else(|| AutodiffError::MissingParameter(name.to_string()))
    }

    /// Gradients of the trainable parameters; zeros where the loss does
    /// not depend on a parameter.
    pub fn gradients(&self, adjoints: &Adjoints) -> Gradients {
        self.vars
            .iter()
            .filter(|(_, (_, train))| *train)
            .map(|(name, (v, _))| (name.clone(), adjoints.get_or_zeros(*v)))
            .collect()
    }
}
