use std::rc::Rc;

use super::tensor::Tensor;
use super::{shape_err, AutodiffError, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a user-supplied operation: given the input values, the
/// output value and the output gradient, return one gradient per input.
pub type BackwardFn = Rc<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor>>;

/// Zero padding mode for [`Tape::conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output length `L - k + 1`.
    Valid,
    /// `(k - 1) / 2` zeros before and `k / 2` after; output length `L`.
    Same,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Softmax { src: Var, axis: usize },
    Embedding { table: Var, index: usize },
    Conv1d { signal: Var, kernel: Var, axis: usize, pad_left: usize },
    Sum(Var),
    AddN(Vec<Var>),
    Mse { pred: Var, target: Tensor },
    CrossEntropy { logits: Var, target: usize },
    Bce { logits: Var, targets: Tensor },
    Custom { inputs: Vec<Var>, backward: BackwardFn },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Adjoints {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Adjoints {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        let g = self.grads.get(var.0)?.as_ref()?;
        Some(Tensor::new(self.shapes[var.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient for `var`, zeros when the loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var) -> Tensor {
        self.get(var)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

/// Append-only operation record. Node order is topological by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Views a shape as `(outer, len, inner)` around `axis`.
fn axis_view(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf; its gradient is reported by `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Records a constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFiniteValue(name));
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, name: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                name,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = self.value(a);
        Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_map(a, b, |x, y| x + y);
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_map(a, b, |x, y| x - y);
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_map(a, b, |x, y| x * y);
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.map(a, |x| x * c);
        self.push("scale", value, Op::Scale(a, c), &[a])
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let xv = x[i * k + p];
                if xv == 0.0 {
                    continue;
                }
                for (o, &yv) in row.iter_mut().zip(&y[p * n..(p + 1) * n]) {
                    *o += xv * yv;
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// `[m, n] x [n] -> [m]`.
    pub fn matvec(&mut self, w: Var, v: Var) -> Result<Var> {
        let (sw, sv) = (self.shape(w), self.shape(v));
        if sw.len() != 2 || sv.len() != 1 || sw[1] != sv[0] {
            return Err(shape_err("matvec", format!("{sw:?} x {sv:?}")));
        }
        let (m, n) = (sw[0], sw[1]);
        let (x, y) = (self.value(w).data(), self.value(v).data());
        let out = (0..m)
            .map(|i| x[i * n..(i + 1) * n].iter().zip(y).map(|(a, b)| a * b).sum())
            .collect();
        let value = Tensor::new(vec![m], out)?;
        self.push("matvec", value, Op::MatVec(w, v), &[w, v])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(shape_err("transpose", format!("rank {} input", s.len())));
        }
        let (m, n) = (s[0], s[1]);
        let x = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = x[i * n + j];
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        self.push("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, f64::tanh);
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |x| x.max(0.0));
        self.push("relu", value, Op::Relu(a), &[a])
    }

    /// Concatenation along axis 0. Inputs must agree on all other axes.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(shape_err("concat", format!("{s:?} vs trailing {tail:?}")));
            }
            rows += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let value = Tensor::new(shape, data)?;
        self.push("concat", value, Op::Concat(parts.to_vec()), parts)
    }

    /// Rows `start..start + len` along axis 0.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if len == 0 || start + len > s[0] {
            return Err(shape_err("slice", format!("{start}..{} of {s:?}", start + len)));
        }
        let row: usize = s[1..].iter().product();
        let data = self.value(a).data()[start * row..(start + len) * row].to_vec();
        let mut shape = s;
        shape[0] = len;
        let value = Tensor::new(shape, data)?;
        self.push("slice", value, Op::Slice { src: a, start }, &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(shape_err("softmax", format!("axis {axis} of {shape:?}")));
        }
        let (outer, len, inner) = axis_view(&shape, axis);
        let x = self.value(a).data();
        let mut out = vec![0.0; x.len()];
        let mut lane = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                for l in 0..len {
                    lane[l] = x[(o * len + l) * inner + i];
                }
                softmax_in_place(&mut lane);
                for l in 0..len {
                    out[(o * len + l) * inner + i] = lane[l];
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push("softmax", value, Op::Softmax { src: a, axis }, &[a])
    }

    /// Row `index` of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: Var, index: usize) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 || index >= s[0] {
            return Err(shape_err("embedding", format!("index {index} into {s:?}")));
        }
        let dim = s[1];
        let data = self.value(table).data()[index * dim..(index + 1) * dim].to_vec();
        let value = Tensor::vector(data);
        self.push("embedding", value, Op::Embedding { table, index }, &[table])
    }

    /// Single-channel cross-correlation of `signal` (rank 1 or 2) with a
    /// rank-1 `kernel` along `axis`, shared across the other axis.
    pub fn conv1d(&mut self, signal: Var, kernel: Var, axis: usize, padding: Padding) -> Result<Var> {
        let shape = self.shape(signal).to_vec();
        let ks = self.shape(kernel);
        if ks.len() != 1 || shape.len() > 2 || axis >= shape.len() {
            return Err(shape_err(
                "conv1d",
                format!("signal {shape:?}, kernel {ks:?}, axis {axis}"),
            ));
        }
        let k = ks[0];
        let (outer, len, inner) = axis_view(&shape, axis);
        let (pad_left, out_len) = match padding {
            Padding::Valid => {
                if len < k {
                    return Err(shape_err(
                        "conv1d",
                        format!("valid padding with length {len} < kernel {k}"),
                    ));
                }
                (0, len - k + 1)
            }
            Padding::Same => ((k - 1) / 2, len),
        };
        let x = self.value(signal).data();
        let w = self.value(kernel).data();
        let mut out = vec![0.0; outer * out_len * inner];
        for o in 0..outer {
            for t in 0..out_len {
                for (j, &wj) in w.iter().enumerate() {
                    let src = t + j;
                    if src < pad_left || src - pad_left >= len {
                        continue;
                    }
                    let src = src - pad_left;
                    let dst_row = (o * out_len + t) * inner;
                    let src_row = (o * len + src) * inner;
                    for i in 0..inner {
                        out[dst_row + i] += wj * x[src_row + i];
                    }
                }
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = out_len;
        let value = Tensor::new(out_shape, out)?;
        self.push(
            "conv1d",
            value,
            Op::Conv1d {
                signal,
                kernel,
                axis,
                pad_left,
            },
            &[signal, kernel],
        )
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push("sum", value, Op::Sum(a), &[a])
    }

    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err("add_n", "no inputs"))?;
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            self.same_shape("add_n", first, p)?;
            for (a, b) in acc.data_mut().iter_mut().zip(self.value(p).data()) {
                *a += b;
            }
        }
        self.push("add_n", acc, Op::AddN(parts.to_vec()), parts)
    }

    pub fn mean_of(&mut self, parts: &[Var]) -> Result<Var> {
        let total = self.add_n(parts)?;
        self.scale(total, 1.0 / parts.len() as f64)
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        if self.shape(pred) != target.shape() {
            return Err(shape_err(
                "mse_loss",
                format!("{:?} vs {:?}", self.shape(pred), target.shape()),
            ));
        }
        let p = self.value(pred).data();
        let n = p.len() as f64;
        let loss = p.iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        self.push(
            "mse_loss",
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            &[pred],
        )
    }

    /// `-log softmax(logits)[target]` for a rank-1 logit vector.
    pub fn cross_entropy_loss(&mut self, logits: Var, target: usize) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 1 || target >= s[0] {
            return Err(shape_err("cross_entropy_loss", format!("target {target} for {s:?}")));
        }
        let x = self.value(logits).data();
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        self.push(
            "cross_entropy_loss",
            Tensor::scalar(lse - x[target]),
            Op::CrossEntropy { logits, target },
            &[logits],
        )
    }

    /// Mean binary cross-entropy of pre-sigmoid `logits` against 0/1 targets.
    pub fn binary_cross_entropy_loss(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        if self.shape(logits) != targets.shape() {
            return Err(shape_err(
                "binary_cross_entropy_loss",
                format!("{:?} vs {:?}", self.shape(logits), targets.shape()),
            ));
        }
        let x = self.value(logits).data();
        let n = x.len() as f64;
        let loss = x
            .iter()
            .zip(targets.data())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        self.push(
            "binary_cross_entropy_loss",
            Tensor::scalar(loss),
            Op::Bce {
                logits,
                targets: targets.clone(),
            },
            &[logits],
        )
    }

    /// Records an operation whose forward value is already computed and
    /// whose gradient rule is supplied by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: BackwardFn) -> Result<Var> {
        self.push(
            "custom",
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            inputs,
        )
    }

    /// Reverse sweep from a one-element `loss`. A tape supports a single
    /// backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Adjoints> {
        if self.consumed {
            return Err(AutodiffError::BackwardTwice);
        }
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarLoss(ls.to_vec()));
        }
        self.consumed = true;

        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            backprop_node(nodes, idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Adjoints {
            grads,
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

/// Gradient buffer for `v`, allocated on first use; `None` if `v` does not
/// lead to a trainable leaf.
fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
}

fn backprop_node(nodes: &[Node], idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = nodes[idx].value.data();
    let val = |v: Var| nodes[v.0].value.data();
    match &nodes[idx].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for (v, sign) in [(*a, 1.0), (*b, 1.0)] {
                if let Some(s) = slot(nodes, grads, v) {
                    s.iter_mut().zip(g).for_each(|(d, gi)| *d += sign * gi);
                }
            }
        }
        Op::Sub(a, b) => {
            for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                if let Some(s) = slot(nodes, grads, v) {
                    s.iter_mut().zip(g).for_each(|(d, gi)| *d += sign * gi);
                }
            }
        }
        Op::Mul(a, b) => {
            for (v, other) in [(*a, *b), (*b, *a)] {
                let o = val(other);
                if let Some(s) = slot(nodes, grads, v) {
                    for ((d, gi), ov) in s.iter_mut().zip(g).zip(o) {
                        *d += gi * ov;
                    }
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(s) = slot(nodes, grads, *a) {
                s.iter_mut().zip(g).for_each(|(d, gi)| *d += c * gi);
            }
        }
        Op::MatMul(a, b) => {
            let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let (x, y) = (val(*a), val(*b));
            if let Some(s) = slot(nodes, grads, *a) {
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * y[p * n + j];
                        }
                        s[i * k + p] += acc;
                    }
                }
            }
            if let Some(s) = slot(nodes, grads, *b) {
                for i in 0..m {
                    for p in 0..k {
                        let xv = x[i * k + p];
                        for j in 0..n {
                            s[p * n + j] += xv * g[i * n + j];
                        }
                    }
                }
            }
        }
        Op::MatVec(w, v) => {
            let sw = nodes[w.0].value.shape();
            let (m, n) = (sw[0], sw[1]);
            let (x, y) = (val(*w), val(*v));
            if let Some(s) = slot(nodes, grads, *w) {
                for i in 0..m {
                    let gi = g[i];
                    if gi == 0.0 {
                        continue;
                    }
                    for (d, yv) in s[i * n..(i + 1) * n].iter_mut().zip(y) {
                        *d += gi * yv;
                    }
                }
            }
            if let Some(s) = slot(nodes, grads, *v) {
                for i in 0..m {
                    let gi = g[i];
                    for (d, xv) in s.iter_mut().zip(&x[i * n..(i + 1) * n]) {
                        *d += gi * xv;
                    }
                }
            }
        }
        Op::Transpose(a) => {
            let sa = nodes[a.0].value.shape();
            let (m, n) = (sa[0], sa[1]);
            if let Some(s) = slot(nodes, grads, *a) {
                for i in 0..m {
                    for j in 0..n {
                        s[i * n + j] += g[j * m + i];
                    }
                }
            }
        }
        Op::Reshape(a) => {
            if let Some(s) = slot(nodes, grads, *a) {
                s.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
            }
        }
        Op::Sigmoid(a) => {
            if let Some(s) = slot(nodes, grads, *a) {
                for ((d, gi), y) in s.iter_mut().zip(g).zip(out) {
                    *d += gi * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(s) = slot(nodes, grads, *a) {
                for ((d, gi), y) in s.iter_mut().zip(g).zip(out) {
                    *d += gi * (1.0 - y * y);
                }
            }
        }
        Op::Relu(a) => {
            let x = val(*a);
            if let Some(s) = slot(nodes, grads, *a) {
                for ((d, gi), xv) in s.iter_mut().zip(g).zip(x) {
                    if *xv > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let n = nodes[p.0].value.len();
                if let Some(s) = slot(nodes, grads, *p) {
                    s.iter_mut().zip(&g[offset..offset + n]).for_each(|(d, gi)| *d += gi);
                }
                offset += n;
            }
        }
        Op::Slice { src, start } => {
            let shape = nodes[src.0].value.shape();
            let row: usize = shape[1..].iter().product();
            if let Some(s) = slot(nodes, grads, *src) {
                let begin = start * row;
                s[begin..begin + g.len()].iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
            }
        }
        Op::Softmax { src, axis } => {
            let shape = nodes[src.0].value.shape();
            let (outer, len, inner) = axis_view(shape, *axis);
            if let Some(s) = slot(nodes, grads, *src) {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let dot: f64 = (0..len).map(|l| g[at(l)] * out[at(l)]).sum();
                        for l in 0..len {
                            s[at(l)] += out[at(l)] * (g[at(l)] - dot);
                        }
                    }
                }
            }
        }
        Op::Embedding { table, index } => {
            let dim = g.len();
            if let Some(s) = slot(nodes, grads, *table) {
                s[index * dim..(index + 1) * dim]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, gi)| *d += gi);
            }
        }
        Op::Conv1d {
            signal,
            kernel,
            axis,
            pad_left,
        } => {
            let shape = nodes[signal.0].value.shape();
            let (outer, len, inner) = axis_view(shape, *axis);
            let out_len = nodes[idx].value.shape()[*axis];
            let (x, w) = (val(*signal), val(*kernel));
            let pad = *pad_left;
            let mut gx = slot(nodes, grads, *signal).map(std::mem::take);
            let mut gw = slot(nodes, grads, *kernel).map(std::mem::take);
            for o in 0..outer {
                for t in 0..out_len {
                    let g_row = (o * out_len + t) * inner;
                    for (j, &wj) in w.iter().enumerate() {
                        let src = t + j;
                        if src < pad || src - pad >= len {
                            continue;
                        }
                        let src_row = (o * len + src - pad) * inner;
                        if let Some(gx) = gx.as_mut() {
                            for i in 0..inner {
                                gx[src_row + i] += wj * g[g_row + i];
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            let mut acc = 0.0;
                            for i in 0..inner {
                                acc += g[g_row + i] * x[src_row + i];
                            }
                            gw[j] += acc;
                        }
                    }
                }
            }
            if let Some(buf) = gx {
                grads[signal.0] = Some(buf);
            }
            if let Some(buf) = gw {
                grads[kernel.0] = Some(buf);
            }
        }
        Op::Sum(a) => {
            if let Some(s) = slot(nodes, grads, *a) {
                s.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::AddN(parts) => {
            for p in parts {
                if let Some(s) = slot(nodes, grads, *p) {
                    s.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
            }
        }
        Op::Mse { pred, target } => {
            let p = val(*pred);
            let n = p.len() as f64;
            if let Some(s) = slot(nodes, grads, *pred) {
                for ((d, pv), tv) in s.iter_mut().zip(p).zip(target.data()) {
                    *d += g[0] * 2.0 * (pv - tv) / n;
                }
            }
        }
        Op::CrossEntropy { logits, target } => {
            let mut probs = val(*logits).to_vec();
            softmax_in_place(&mut probs);
            probs[*target] -= 1.0;
            if let Some(s) = slot(nodes, grads, *logits) {
                s.iter_mut().zip(&probs).for_each(|(d, p)| *d += g[0] * p);
            }
        }
        Op::Bce { logits, targets } => {
            let x = val(*logits);
            let n = x.len() as f64;
            if let Some(s) = slot(nodes, grads, *logits) {
                for ((d, xv), y) in s.iter_mut().zip(x).zip(targets.data()) {
                    *d += g[0] * (sigmoid(*xv) - y) / n;
                }
            }
        }
        Op::Custom { inputs, backward } => {
            let values: Vec<&Tensor> = inputs.iter().map(|v| &nodes[v.0].value).collect();
            let g_out = Tensor::new(nodes[idx].value.shape().to_vec(), g.to_vec()).expect("grad shape");
            let input_grads = backward(&values, &nodes[idx].value, &g_out);
            for (v, gv) in inputs.iter().zip(input_grads) {
                if let Some(s) = slot(nodes, grads, *v) {
                    s.iter_mut().zip(gv.data()).for_each(|(d, gi)| *d += gi);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[3]));
        let y = tape.softmax(x, 0).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..12).map(|i| (i as f64 * 1.7).sin() * 30.0).collect();
        let x = tape.constant(Tensor::new(vec![3, 4], data).unwrap());
        for axis in 0..2 {
            let y = tape.softmax(x, axis).unwrap();
            let v = tape.value(y).data();
            if axis == 1 {
                for r in 0..3 {
                    let s: f64 = v[r * 4..r * 4 + 4].iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            } else {
                for c in 0..4 {
                    let s: f64 = (0..3).map(|r| v[r * 4 + c]).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
            assert!(v.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn valid_conv_of_ones() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[10], 1.0));
        let k = tape.constant(Tensor::filled(&[10], 1.0));
        let y = tape.conv1d(x, k, 0, Padding::Valid).unwrap();
        assert_eq!(tape.value(y).data(), &[10.0]);
    }

    #[test]
    fn conv_output_lengths() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[30, 20], 1.0));
        let k10 = tape.constant(Tensor::filled(&[10], 1.0));
        let k11 = tape.constant(Tensor::filled(&[11], 1.0));
        let cases = [
            (k10, 0, Padding::Valid, vec![21, 20]),
            (k10, 0, Padding::Same, vec![30, 20]),
            (k11, 1, Padding::Valid, vec![30, 10]),
            (k11, 1, Padding::Same, vec![30, 20]),
        ];
        for (k, axis, pad, shape) in cases {
            let y = tape.conv1d(x, k, axis, pad).unwrap();
            assert_eq!(tape.shape(y), &shape[..]);
        }
    }

    #[test]
    fn same_padding_even_kernel_alignment() {
        // kernel 4: pad 1 before, 2 after
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        let k = tape.constant(Tensor::vector(vec![1.0, 0.0, 0.0, 0.0]));
        let y = tape.conv1d(x, k, 0, Padding::Same).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[3]));
        let b = tape.constant(Tensor::zeros(&[4]));
        assert!(matches!(tape.add(a, b), Err(AutodiffError::ShapeMismatch { .. })));
        let w = tape.constant(Tensor::zeros(&[2, 5]));
        assert!(matches!(tape.matvec(w, a), Err(AutodiffError::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(f64::MAX));
        assert_eq!(tape.scale(a, 10.0), Err(AutodiffError::NonFiniteValue("scale")));
    }

    #[test]
    fn second_backward_fails_and_values_survive() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.5, -1.0]));
        let y = tape.tanh(x).unwrap();
        let l = tape.sum(y).unwrap();
        let before = tape.value(y).clone();
        let grads = tape.backward(l).unwrap();
        assert_eq!(tape.value(y), &before);
        let gx = grads.get(x).unwrap();
        assert!((gx.data()[0] - (1.0 - 0.5f64.tanh().powi(2))).abs() < 1e-15);
        assert_eq!(tape.backward(l).unwrap_err(), AutodiffError::BackwardTwice);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let w = tape.param(Tensor::vector(vec![3.0, 4.0]));
        let y = tape.mul(x, w).unwrap();
        let l = tape.sum(y).unwrap();
        let grads = tape.backward(l).unwrap();
        assert!(grads.get(x).is_none());
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn cross_entropy_value() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0, 0.0, 0.0]));
        let l = tape.cross_entropy_loss(x, 2).unwrap();
        assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-15);
    }
}
