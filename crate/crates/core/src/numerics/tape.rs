//! Reverse-mode differentiation over a flat operation tape.
//!
//! Every primitive appends one node holding its output value and enough
//! context to run its backward rule. Nodes are appended after their
//! operands, so the node index order is already topological and the
//! backward pass is a single reverse sweep.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, softmax_in_place, Axis, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Boolean `rows × cols` pattern of which entries may receive weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != rows * cols {
            return Err(Error::shape("mask", format!("{rows}x{cols} vs {}", allowed.len())));
        }
        Ok(Self { rows, cols, allowed })
    }

    pub fn all(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    /// Lower-triangular pattern: query `i` sees keys `0..=i`.
    pub fn causal(n: usize) -> Self {
        let allowed = (0..n).flat_map(|i| (0..n).map(move |j| j <= i)).collect();
        Self {
            rows: n,
            cols: n,
            allowed,
        }
    }

    /// Every query sees exactly the keys flagged valid.
    pub fn key_padding(rows: usize, key_valid: &[bool]) -> Self {
        let cols = key_valid.len();
        let allowed = (0..rows).flat_map(|_| key_valid.iter().copied()).collect();
        Self {
            rows,
            cols,
            allowed,
        }
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.shape() != other.shape() {
            return Err(Error::shape("mask", "cannot combine masks of different shape"));
        }
        let allowed = self
            .allowed
            .iter()
            .zip(&other.allowed)
            .map(|(a, b)| *a && *b)
            .collect();
        Ok(Mask {
            rows: self.rows,
            cols: self.cols,
            allowed,
        })
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn is_allowed(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }

    fn row(&self, r: usize) -> &[bool] {
        &self.allowed[r * self.cols..(r + 1) * self.cols]
    }
}

/// Deliberate backward-rule corruptions used to show that the gradient
/// checker actually detects broken derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    /// ReLU passes the upstream gradient through unmasked.
    ReluPassThrough,
    /// Softmax backward drops the `-s·(g·s)` term of its Jacobian.
    SoftmaxDiagonalOnly,
}

type CustomBackward = dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor> + Send + Sync;

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Dropout {
        x: Var,
        keep: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        ignore_id: usize,
        probs: Tensor,
        count: usize,
    },
    Sum(Var),
    Custom {
        inputs: Vec<Var>,
        backward: Arc<CustomBackward>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation. Single-owner: build, differentiate, and read
/// gradients from one thread; parallelism happens across tapes.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    faults: Vec<BackwardFault>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when the loss does
    /// not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let [r, c] = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Corrupt one backward rule on this tape (fault injection).
    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.faults.push(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Record a leaf (parameter, input, or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let out = matmul_nn(av, bv);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_transposed(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape(
                "matmul_transposed",
                format!("{:?} x {:?}ᵀ", av.shape(), bv.shape()),
            ));
        }
        let out = matmul_nt(av, bv);
        Ok(self.push(out, Op::MatMulNT(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Element-wise sum; `b` may also be a single row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.add(bv)?;
        let op = if av.shape() == bv.shape() {
            Op::Add(a, b)
        } else {
            Op::AddRow(a, b)
        };
        Ok(self.push(out, op))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} * {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.rows(), av.cols(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::filled(1, 1, self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Softmax along `axis` with max-subtraction.
    pub fn softmax(&mut self, x: Var, axis: Axis) -> Var {
        match axis {
            Axis::Cols => self.masked_softmax_unchecked(x, None),
            Axis::Rows => {
                let t = self.transpose(x);
                let s = self.masked_softmax_unchecked(t, None);
                self.transpose(s)
            }
        }
    }

    /// Row-wise softmax where disallowed entries get exactly zero weight.
    pub fn masked_softmax(&mut self, x: Var, mask: &Mask) -> Result<Var> {
        if self.value(x).shape() != mask.shape() {
            return Err(Error::shape(
                "masked_softmax",
                format!("scores {:?} vs mask {:?}", self.value(x).shape(), mask.shape()),
            ));
        }
        Ok(self.masked_softmax_unchecked(x, Some(mask)))
    }

    fn masked_softmax_unchecked(&mut self, x: Var, mask: Option<&Mask>) -> Var {
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r), mask.map(|m| m.row(r)));
        }
        self.push(out, Op::Softmax(x))
    }

    /// Per-row normalization over the feature axis followed by the learned
    /// affine map. `gamma` and `beta` are `1 × cols` rows.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.value(p).shape() != [1, cols] {
                return Err(Error::shape(
                    "layer_norm",
                    format!("{name} {:?} for width {cols}", self.value(p).shape()),
                ));
            }
        }
        let mut xhat = Tensor::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut out = xhat.clone();
        for r in 0..rows {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = *o * g.data()[c] + b.data()[c];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Gather rows of `table`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if ids.is_empty() {
            return Err(Error::shape("embedding", "no ids"));
        }
        let mut data = Vec::with_capacity(ids.len() * tv.cols());
        for &id in ids {
            if id >= tv.rows() {
                return Err(Error::TokenId {
                    id,
                    size: tv.rows(),
                });
            }
            data.extend_from_slice(tv.row(id));
        }
        let out = Tensor::new(ids.len(), tv.cols(), data)?;
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::shape("concat_rows", format!("width {} vs {cols}", v.cols())));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let rows = self.value(*first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let v = self.value(p);
                out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
                offset += v.cols();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Inverted dropout: identity unless `training`, otherwise zeroes each
    /// entry with probability `p` and rescales survivors by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let keep: Vec<f64> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
            .collect();
        let data = xv.data().iter().zip(&keep).map(|(v, k)| v * k).collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data)?;
        Ok(self.push(out, Op::Dropout { x, keep }))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, skipping positions whose target is `ignore_id`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore_id: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != targets.len() {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} logit rows for {} targets", lv.rows(), targets.len()),
            ));
        }
        let mut probs = lv.clone();
        let mut total = 0.0;
        let mut count = 0;
        for (r, &t) in targets.iter().enumerate() {
            if t == ignore_id {
                continue;
            }
            if t >= lv.cols() {
                return Err(Error::TokenId {
                    id: t,
                    size: lv.cols(),
                });
            }
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            count += 1;
        }
        if count == 0 {
            return Err(Error::Empty("every target position is ignored"));
        }
        for r in 0..probs.rows() {
            softmax_in_place(probs.row_mut(r), None);
        }
        let out = Tensor::filled(1, 1, total / count as f64);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore_id,
                probs,
                count,
            },
        ))
    }

    /// Record an operation with a caller-supplied backward rule. The rule
    /// receives the upstream gradient, the input values, and the output
    /// value, and returns one gradient per input.
    pub fn custom<F>(&mut self, inputs: &[Var], value: Tensor, backward: F) -> Var
    where
        F: Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor> + Send + Sync + 'static,
    {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward: Arc::new(backward),
            },
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != [1, 1] {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", lv.shape()),
            ));
        }
        let shapes: Vec<[usize; 2]> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(1, 1));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            for (var, contribution) in self.node_backward(node, &g) {
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
            // Leaves keep their gradient for the caller.
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn has_fault(&self, fault: BackwardFault) -> bool {
        self.faults.contains(&fault)
    }

    fn node_backward(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => vec![
                (*a, matmul_nt(g, val(*b))),
                (*b, matmul_tn(val(*a), g)),
            ],
            Op::MatMulNT(a, b) => vec![
                (*a, matmul_nn(g, val(*b))),
                (*b, matmul_tn(g, val(*a))),
            ],
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddRow(a, b) => {
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                vec![(*a, g.clone()), (*b, gb)]
            }
            Op::Mul(a, b) => {
                let ga = zip_with(g, val(*b), |x, y| x * y);
                let gb = zip_with(g, val(*a), |x, y| x * y);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, s) => vec![(*a, g.scale(*s))],
            Op::Relu(a) => {
                if self.has_fault(BackwardFault::ReluPassThrough) {
                    return vec![(*a, g.clone())];
                }
                vec![(*a, zip_with(g, val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 }))]
            }
            Op::Softmax(x) => {
                let s = &node.value;
                let mut gx = Tensor::zeros(s.rows(), s.cols());
                let diagonal_only = self.has_fault(BackwardFault::SoftmaxDiagonalOnly);
                for r in 0..s.rows() {
                    let (sr, gr) = (s.row(r), g.row(r));
                    let dot: f64 = if diagonal_only {
                        0.0
                    } else {
                        sr.iter().zip(gr).map(|(a, b)| a * b).sum()
                    };
                    for ((o, sv), gv) in gx.row_mut(r).iter_mut().zip(sr).zip(gr) {
                        *o = sv * (gv - dot);
                    }
                }
                vec![(*x, gx)]
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = val(*gamma);
                let (rows, cols) = (g.rows(), g.cols());
                let n = cols as f64;
                let mut gx = Tensor::zeros(rows, cols);
                let mut gg = Tensor::zeros(1, cols);
                let mut gbeta = Tensor::zeros(1, cols);
                for r in 0..rows {
                    let (gr, xr) = (g.row(r), xhat.row(r));
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for c in 0..cols {
                        let d = gr[c] * gam.data()[c];
                        sum_d += d;
                        sum_dx += d * xr[c];
                        gg.data_mut()[c] += gr[c] * xr[c];
                        gbeta.data_mut()[c] += gr[c];
                    }
                    let is = inv_std[r];
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        let d = gr[c] * gam.data()[c];
                        *o = is / n * (n * d - sum_d - xr[c] * sum_dx);
                    }
                }
                vec![(*x, gx), (*gamma, gg), (*beta, gbeta)]
            }
            Op::Embedding { table, ids } => {
                let tv = val(*table);
                let mut gt = Tensor::zeros(tv.rows(), tv.cols());
                for (r, &id) in ids.iter().enumerate() {
                    for (o, v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                vec![(*table, gt)]
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let [rows, cols] = val(p).shape();
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        offset += rows;
                        (p, Tensor::new(rows, cols, data).expect("concat part shape"))
                    })
                    .collect()
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let [rows, cols] = val(p).shape();
                        let mut gp = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        (p, gp)
                    })
                    .collect()
            }
            Op::Dropout { x, keep } => {
                let data = g.data().iter().zip(keep).map(|(a, b)| a * b).collect();
                vec![(*x, Tensor::new(g.rows(), g.cols(), data).expect("dropout shape"))]
            }
            Op::CrossEntropy {
                logits,
                targets,
                ignore_id,
                probs,
                count,
            } => {
                let scale = g.data()[0] / *count as f64;
                let mut gl = Tensor::zeros(probs.rows(), probs.cols());
                for (r, &t) in targets.iter().enumerate() {
                    if t == *ignore_id {
                        continue;
                    }
                    for (o, p) in gl.row_mut(r).iter_mut().zip(probs.row(r)) {
                        *o = p * scale;
                    }
                    gl.row_mut(r)[t] -= scale;
                }
                vec![(*logits, gl)]
            }
            Op::Sum(a) => {
                let [r, c] = val(*a).shape();
                vec![(*a, Tensor::filled(r, c, g.data()[0]))]
            }
            Op::Custom { inputs, backward } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let gs = backward(g, &values, &node.value);
                inputs.iter().copied().zip(gs).collect()
            }
        }
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![1.0, -2.0], vec![3.0, 0.5]]));
        let s = tape.sum(x);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x), Tensor::ones(2, 2));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![-1.0, 2.0]]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn embedding_accumulates_repeated_ids() {
        let mut tape = Tape::new();
        let table = tape.leaf(t(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]));
        let rows = tape.embedding(table, &[1, 0, 1]).unwrap();
        assert_eq!(tape.value(rows).data(), &[3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let s = tape.sum(rows);
        let grads = tape.backward(s).unwrap();
        // id 1 appears twice, so its row receives 1 + 1.
        assert_eq!(grads.get(table).data(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_rejects_out_of_range_ids() {
        let mut tape = Tape::new();
        let table = tape.leaf(Tensor::zeros(3, 2));
        assert!(matches!(
            tape.embedding(table, &[3]),
            Err(Error::TokenId { id: 3, size: 3 })
        ));
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![1.0, 2.0, 3.0]]));
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.5, false, &mut rng).unwrap(), x);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_rescales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::ones(20, 20));
        let y = tape.dropout(x, 0.25, true, &mut rng).unwrap();
        let out = tape.value(y);
        assert!(out
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 50 && zeros < 150, "{zeros} of 400 dropped");
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(3, 4));
        let loss = tape.cross_entropy(logits, &[0, 1, 2], 99).unwrap();
        assert!((tape.scalar(loss) - 4f64.ln()).abs() < 1e-15);

        let mut sharp = Tensor::zeros(2, 4);
        sharp.set(0, 2, 1000.0);
        sharp.set(1, 0, 1000.0);
        let logits = tape.leaf(sharp);
        let loss = tape.cross_entropy(logits, &[2, 0], 99).unwrap();
        assert!(tape.scalar(loss).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_all_ignored_is_an_error() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(2, 3));
        assert!(matches!(
            tape.cross_entropy(logits, &[0, 0], 0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn masked_softmax_zeroes_disallowed_entries() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![5.0, 1.0, 2.0], vec![0.0, 0.0, 9.0]]));
        let mask = Mask::new(2, 3, vec![true, false, true, true, true, false]).unwrap();
        let s = tape.masked_softmax(x, &mask).unwrap();
        let v = tape.value(s);
        assert_eq!(v.get(0, 1), 0.0);
        assert_eq!(v.get(1, 2), 0.0);
        assert_eq!(v.get(1, 0), 0.5);
        assert!((v.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(tape.masked_softmax(x, &Mask::all(3, 2)).is_err());
    }

    #[test]
    fn causal_mask_is_lower_triangular() {
        let m = Mask::causal(3);
        assert!(m.is_allowed(2, 0) && m.is_allowed(1, 1));
        assert!(!m.is_allowed(0, 1) && !m.is_allowed(1, 2));
    }

    #[test]
    fn custom_op_uses_supplied_rule() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![2.0, 3.0]]));
        let sq = tape.value(x).map(|v| v * v);
        let y = tape.custom(&[x], sq, |g, inputs, _| {
            vec![Tensor::new(1, 2, inputs[0].data().iter().zip(g.data()).map(|(x, g)| 2.0 * x * g).collect()).unwrap()]
        });
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).data(), &[4.0, 6.0]);
    }
}
