//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every operation appends a node whose inputs were appended earlier, so the
//! record is already topologically sorted and the backward sweep is a single
//! reverse pass.

use std::sync::Arc;

use rand::Rng;

use super::activation::{sigmoid, softplus, ActivationKind};
use super::segments::Segments;
use super::tensor::{matmul_at_into, matmul_bt_into, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-destination reduction of edge rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentReduce {
    Sum,
    Mean,
    Max,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Activation(ActivationKind, Var),
    ConcatCols(Vec<Var>),
    SliceCols { input: Var, start: usize },
    GatherRows { input: Var, index: Arc<[usize]> },
    RowSum(Var),
    MulRowScalar(Var, Var),
    SegmentSoftmax { input: Var, segments: Arc<Segments> },
    SegmentReduce { input: Var, segments: Arc<Segments>, kind: SegmentReduce, argmax: Vec<usize> },
    MulConst(Var, Tensor<T>),
    SumSquares(Var),
    Sum(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<(usize, usize)>, probs: Tensor<T> },
    SigmoidBce { logits: Var, targets: Tensor<T>, rows: Vec<usize> },
    LogSoftmax(Var),
    Pick { input: Var, offset: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Record of a single forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`, or `None` when `v` does not
    /// influence the loss or does not require gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, materializing zeros when it received none.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn check_same(op: &'static str, a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a `[1×N]` row to every row of an `[M×N]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", x.shape(), r.shape())));
        }
        let cols = x.cols();
        let mut value = x.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += r.data()[i % cols];
        }
        Ok(self.push(value, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn activation(&mut self, kind: ActivationKind, a: Var) -> Var {
        let value = self.value(a).map(|x| kind.apply(x));
        self.push(value, Op::Activation(kind, a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let rows = self.value(*first).rows();
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {:?}", start + len, x.shape()),
            ));
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let value = Tensor::new(vec![x.rows(), len], data)?;
        Ok(self.push(value, Op::SliceCols { input: a, start }, &[a]))
    }

    /// Row `k` of the output is row `index[k]` of the input.
    pub fn gather_rows(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {:?}", x.shape())));
        }
        let cols = x.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(x.row(i));
        }
        let value = Tensor::new(vec![index.len(), cols], data)?;
        Ok(self.push(value, Op::GatherRows { input: a, index: index.clone() }, &[a]))
    }

    /// `[M×N] -> [M×1]`
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data: Vec<T> = (0..x.rows()).map(|r| x.row(r).iter().copied().sum()).collect();
        let value = Tensor::new(vec![x.rows(), 1], data).expect("row count");
        self.push(value, Op::RowSum(a), &[a])
    }

    /// Scales row `e` of `m[E×D]` by `s[e]` where `s` is `[E×1]`.
    pub fn mul_row_scalar(&mut self, m: Var, s: Var) -> Result<Var> {
        let (x, w) = (self.value(m), self.value(s));
        if w.numel() != x.rows() {
            return Err(Error::shape(
                "mul_row_scalar",
                format!("{:?} rows vs {:?} weights", x.shape(), w.shape()),
            ));
        }
        let cols = x.cols();
        let mut value = x.clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v *= w.data()[i / cols];
        }
        Ok(self.push(value, Op::MulRowScalar(m, s), &[m, s]))
    }

    /// Softmax of `[E×1]` scores within each destination segment.
    pub fn segment_softmax(&mut self, scores: Var, segments: &Arc<Segments>) -> Result<Var> {
        let s = self.value(scores);
        if s.numel() != segments.len() {
            return Err(Error::shape(
                "segment_softmax",
                format!("{} scores for {} rows", s.numel(), segments.len()),
            ));
        }
        if let Some(empty) = segments.first_empty() {
            return Err(Error::Invariant(format!("segment {empty} has no incoming rows")));
        }
        let mut out = vec![T::zero(); s.numel()];
        for seg in 0..segments.count() {
            let members = segments.members(seg);
            let max = members.iter().map(|&e| s.data()[e]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for &e in members {
                let z = (s.data()[e] - max).exp();
                out[e] = z;
                total += z;
            }
            for &e in members {
                out[e] /= total;
            }
        }
        let value = Tensor::new(vec![s.numel(), 1], out)?;
        Ok(self.push(value, Op::SegmentSoftmax { input: scores, segments: segments.clone() }, &[scores]))
    }

    /// Reduces `[E×D]` rows into `[N×D]` by destination segment.
    pub fn segment_reduce(&mut self, kind: SegmentReduce, m: Var, segments: &Arc<Segments>) -> Result<Var> {
        let x = self.value(m);
        if x.rows() != segments.len() {
            return Err(Error::shape(
                "segment_reduce",
                format!("{:?} rows vs {} segment entries", x.shape(), segments.len()),
            ));
        }
        let d = x.cols();
        let n = segments.count();
        let mut out = vec![T::zero(); n * d];
        let mut argmax = Vec::new();
        match kind {
            SegmentReduce::Sum | SegmentReduce::Mean => {
                for seg in 0..n {
                    let row = &mut out[seg * d..(seg + 1) * d];
                    for &e in segments.members(seg) {
                        for (o, &v) in row.iter_mut().zip(x.row(e)) {
                            *o += v;
                        }
                    }
                    if kind == SegmentReduce::Mean && segments.size(seg) > 0 {
                        let c = T::lit(segments.size(seg) as f64);
                        row.iter_mut().for_each(|o| *o /= c);
                    }
                }
            }
            SegmentReduce::Max => {
                argmax = vec![usize::MAX; n * d];
                for seg in 0..n {
                    let members = segments.members(seg);
                    for j in 0..d {
                        let mut best: Option<(usize, T)> = None;
                        for &e in members {
                            let v = x.get(e, j);
                            // strict comparison keeps the lowest row on ties
                            if best.is_none_or(|(_, b)| v > b) {
                                best = Some((e, v));
                            }
                        }
                        if let Some((e, v)) = best {
                            out[seg * d + j] = v;
                            argmax[seg * d + j] = e;
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, d], out)?;
        Ok(self.push(
            value,
            Op::SegmentReduce { input: m, segments: segments.clone(), kind, argmax },
            &[m],
        ))
    }

    /// Elementwise product with a constant tensor (no gradient to the constant).
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Result<Var> {
        check_same("mul_const", self.value(a), &c)?;
        let value = self.value(a).zip_map(&c, |x, y| x * y);
        Ok(self.push(value, Op::MulConst(a, c), &[a]))
    }

    /// Inverted dropout: zeroes each element with probability `p` and
    /// rescales survivors by `1/(1-p)`. Identity when not training or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let mask = dropout_mask(self.value(a).shape(), p, rng);
        self.mul_const(a, mask)
    }

    /// `Σ x²` as a `[1×1]` value.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum_squares());
        self.push(value, Op::SumSquares(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    /// Mean softmax cross-entropy over the listed rows.
    pub fn softmax_cross_entropy(&mut self, logits: Var, classes: &[usize], rows: &[usize]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Parameter("cross-entropy over an empty mask".into()));
        }
        let x = self.value(logits);
        let c = x.cols();
        let mut probs = Tensor::zeros(&[rows.len(), c]);
        let mut total = T::zero();
        let mut targets = Vec::with_capacity(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            let target = *classes
                .get(r)
                .ok_or_else(|| Error::shape("softmax_cross_entropy", format!("no label for row {r}")))?;
            if r >= x.rows() || target >= c {
                return Err(Error::shape(
                    "softmax_cross_entropy",
                    format!("row {r} / class {target} outside {:?}", x.shape()),
                ));
            }
            let row = x.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            total += lse - row[target];
            for (j, &v) in row.iter().enumerate() {
                probs.data_mut()[k * c + j] = (v - lse).exp();
            }
            targets.push((r, target));
        }
        let value = Tensor::scalar(total / T::lit(rows.len() as f64));
        Ok(self.push(value, Op::SoftmaxCrossEntropy { logits, targets, probs }, &[logits]))
    }

    /// Mean elementwise sigmoid binary cross-entropy over the listed rows
    /// and every label column. `targets` has the logits' shape.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: &Tensor<T>, rows: &[usize]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Parameter("binary cross-entropy over an empty mask".into()));
        }
        let x = self.value(logits);
        check_same("sigmoid_bce", x, targets)?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(Error::shape("sigmoid_bce", format!("row {bad} outside {:?}", x.shape())));
        }
        let mut total = T::zero();
        for &r in rows {
            for (&v, &t) in x.row(r).iter().zip(targets.row(r)) {
                total += softplus(v) - t * v;
            }
        }
        let value = Tensor::scalar(total / T::lit((rows.len() * x.cols()) as f64));
        Ok(self.push(
            value,
            Op::SigmoidBce { logits, targets: targets.clone(), rows: rows.to_vec() },
            &[logits],
        ))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        let c = x.cols();
        for r in 0..x.rows() {
            let row = x.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            for j in 0..c {
                value.data_mut()[r * c + j] = row[j] - lse;
            }
        }
        self.push(value, Op::LogSoftmax(a), &[a])
    }

    /// Selects one element as a `[1×1]` value.
    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Result<Var> {
        let x = self.value(a);
        if row >= x.rows() || col >= x.cols() {
            return Err(Error::shape("pick", format!("({row}, {col}) outside {:?}", x.shape())));
        }
        let offset = row * x.cols() + col;
        let value = Tensor::scalar(x.data()[offset]);
        Ok(self.push(value, Op::Pick { input: a, offset }, &[a]))
    }

    /// Back-propagates from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward", format!("loss shape {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> Option<&'g mut Tensor<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(node.value.shape())))
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(ga) = self.slot(grads, *a) {
                    matmul_bt_into(g.data(), bv.data(), ga.data_mut(), m, n, k);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    matmul_at_into(av.data(), g.data(), gb.data_mut(), m, k, n);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (o, &v) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, &gv), &y) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gv * y;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, &gv), &x) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gv * x;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
                let cols = g.cols();
                if let Some(gr) = self.slot(grads, *row) {
                    for (k, &gv) in g.data().iter().enumerate() {
                        gr.data_mut()[k % cols] += gv;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (o, &gv) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += gv * *c;
                    }
                }
            }
            Op::Activation(kind, a) => {
                let x = self.value(*a);
                let y = &node.value;
                if let Some(ga) = self.slot(grads, *a) {
                    for (k, o) in ga.data_mut().iter_mut().enumerate() {
                        *o += g.data()[k] * kind.derivative(x.data()[k], y.data()[k]);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if let Some(gp) = self.slot(grads, *p) {
                        for r in 0..g.rows() {
                            for j in 0..w {
                                gp.data_mut()[r * w + j] += g.data()[r * total + start + j];
                            }
                        }
                    }
                    start += w;
                }
            }
            Op::SliceCols { input, start } => {
                let w = g.cols();
                let total = self.value(*input).cols();
                if let Some(ga) = self.slot(grads, *input) {
                    for r in 0..g.rows() {
                        for j in 0..w {
                            ga.data_mut()[r * total + start + j] += g.data()[r * w + j];
                        }
                    }
                }
            }
            Op::GatherRows { input, index } => {
                let cols = g.cols();
                if let Some(ga) = self.slot(grads, *input) {
                    for (k, &src) in index.iter().enumerate() {
                        let dst = &mut ga.data_mut()[src * cols..(src + 1) * cols];
                        for (o, &gv) in dst.iter_mut().zip(&g.data()[k * cols..(k + 1) * cols]) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::RowSum(a) => {
                let cols = self.value(*a).cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for (k, o) in ga.data_mut().iter_mut().enumerate() {
                        *o += g.data()[k / cols];
                    }
                }
            }
            Op::MulRowScalar(m, s) => {
                let (x, w) = (self.value(*m), self.value(*s));
                let cols = x.cols();
                if let Some(gm) = self.slot(grads, *m) {
                    for (k, o) in gm.data_mut().iter_mut().enumerate() {
                        *o += g.data()[k] * w.data()[k / cols];
                    }
                }
                if let Some(gs) = self.slot(grads, *s) {
                    for r in 0..x.rows() {
                        let dot: T = x.row(r).iter().zip(g.row(r)).map(|(&a, &b)| a * b).sum();
                        gs.data_mut()[r] += dot;
                    }
                }
            }
            Op::SegmentSoftmax { input, segments } => {
                let y = &node.value;
                if let Some(gs) = self.slot(grads, *input) {
                    for seg in 0..segments.count() {
                        let members = segments.members(seg);
                        let inner: T = members.iter().map(|&e| g.data()[e] * y.data()[e]).sum();
                        for &e in members {
                            gs.data_mut()[e] += y.data()[e] * (g.data()[e] - inner);
                        }
                    }
                }
            }
            Op::SegmentReduce { input, segments, kind, argmax } => {
                let d = g.cols();
                if let Some(gm) = self.slot(grads, *input) {
                    match kind {
                        SegmentReduce::Sum | SegmentReduce::Mean => {
                            for (e, &seg) in segments.segment_of().iter().enumerate() {
                                let scale = if *kind == SegmentReduce::Mean {
                                    T::one() / T::lit(segments.size(seg) as f64)
                                } else {
                                    T::one()
                                };
                                for j in 0..d {
                                    gm.data_mut()[e * d + j] += g.data()[seg * d + j] * scale;
                                }
                            }
                        }
                        SegmentReduce::Max => {
                            for (k, &e) in argmax.iter().enumerate() {
                                if e != usize::MAX {
                                    gm.data_mut()[e * d + k % d] += g.data()[k];
                                }
                            }
                        }
                    }
                }
            }
            Op::MulConst(a, c) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, &gv), &cv) in ga.data_mut().iter_mut().zip(g.data()).zip(c.data()) {
                        *o += gv * cv;
                    }
                }
            }
            Op::SumSquares(a) => {
                let x = self.value(*a);
                let two_g = T::lit(2.0) * g.item();
                if let Some(ga) = self.slot(grads, *a) {
                    for (o, &v) in ga.data_mut().iter_mut().zip(x.data()) {
                        *o += two_g * v;
                    }
                }
            }
            Op::Sum(a) => {
                let gv = g.item();
                if let Some(ga) = self.slot(grads, *a) {
                    ga.data_mut().iter_mut().for_each(|o| *o += gv);
                }
            }
            Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                let c = probs.cols();
                let scale = g.item() / T::lit(targets.len() as f64);
                if let Some(gl) = self.slot(grads, *logits) {
                    for (k, &(r, t)) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == t { T::one() } else { T::zero() };
                            gl.data_mut()[r * c + j] += (probs.data()[k * c + j] - onehot) * scale;
                        }
                    }
                }
            }
            Op::SigmoidBce { logits, targets, rows } => {
                let x = self.value(*logits);
                let c = x.cols();
                let scale = g.item() / T::lit((rows.len() * c) as f64);
                if let Some(gl) = self.slot(grads, *logits) {
                    for &r in rows {
                        for j in 0..c {
                            let k = r * c + j;
                            gl.data_mut()[k] += (sigmoid(x.data()[k]) - targets.data()[k]) * scale;
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let c = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for r in 0..y.rows() {
                        let gsum: T = g.row(r).iter().copied().sum();
                        for j in 0..c {
                            let k = r * c + j;
                            ga.data_mut()[k] += g.data()[k] - y.data()[k].exp() * gsum;
                        }
                    }
                }
            }
            Op::Pick { input, offset } => {
                if let Some(ga) = self.slot(grads, *input) {
                    ga.data_mut()[*offset] += g.item();
                }
            }
        }
    }
}

/// Inverted-dropout keep mask with survivors scaled by `1/(1-p)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(shape: &[usize], p: f64, rng: &mut R) -> Tensor<T> {
    let keep = T::lit(1.0 / (1.0 - p));
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("mask shape")
}
