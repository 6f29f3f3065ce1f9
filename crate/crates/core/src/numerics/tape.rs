//! Reverse-mode differentiation over whole matrices.
//!
//! Every op evaluates eagerly and appends a node; [`Tape::backward`] walks the
//! nodes in reverse creation order, so gradient accumulation order is fixed
//! and two backward passes over identical inputs agree bit for bit.

use std::collections::HashMap;
use std::sync::Arc;

use crate::attention::kernel::{sparse_attention, sparse_attention_backward, HeadWeights};
use crate::attention::SparsityPattern;
use crate::error::{Error, Result};
use crate::numerics::ops::{layer_norm_cached, LayerNormCache};
use crate::numerics::{Matrix, ParameterStore};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<T: Scalar> {
    Constant,
    Param,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Relu(NodeId),
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    SoftmaxRows(NodeId),
    Sum(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        cache: LayerNormCache<T>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        pattern: Arc<SparsityPattern>,
        weights: Vec<HeadWeights<T>>,
    },
    Bce {
        p: NodeId,
        target: Matrix<T>,
        norm: T,
    },
}

struct Node<T: Scalar> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Probability floor applied by [`Tape::bce`] on both sides of `(0, 1)`.
pub const BCE_CLAMP: f64 = 1e-7;

/// Operation recorder.
///
/// A tape created with [`Tape::inference`] still evaluates every op but keeps
/// no attention weights, and refuses to run backward.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    params: HashMap<usize, NodeId>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            recording: true,
        }
    }

    pub fn inference() -> Self {
        Tape {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, id: NodeId) -> T {
        self.value(id).get(0, 0)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<NodeId> {
        let id = store.id(name)?;
        if let Some(&node) = self.params.get(&id) {
            return Ok(node);
        }
        let node = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, node);
        Ok(node)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.value(a).add_row(self.value(bias))?;
        Ok(self.push(v, Op::AddRow(a, bias)))
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let h = self.matmul(x, w)?;
        self.add_row(h, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).relu();
        self.push(v, Op::Relu(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let blocks: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_cols(&blocks)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let blocks: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_rows(&blocks)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(a).slice_cols(start, end)?;
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = crate::numerics::softmax_rows(self.value(a))?;
        Ok(self.push(v, Op::SoftmaxRows(a)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::filled(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (v, cache) = layer_norm_cached(self.value(x), self.value(gain), self.value(bias))?;
        Ok(self.push(v, Op::LayerNorm { x, gain, bias, cache }))
    }

    /// Multi-head attention over pre-projected `q`, `k`, `v` restricted to
    /// `pattern`; heads own contiguous column blocks.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        pattern: Arc<SparsityPattern>,
        heads: usize,
    ) -> Result<NodeId> {
        let (out, weights) = sparse_attention(
            self.value(q),
            self.value(k),
            self.value(v),
            &pattern,
            heads,
            self.recording,
        )?;
        Ok(self.push(out, Op::Attention { q, k, v, pattern, weights }))
    }

    /// Pattern and per-head weights of an attention node, when retained.
    pub fn attention_weights(&self, id: NodeId) -> Option<(&SparsityPattern, &[HeadWeights<T>])> {
        match &self.nodes[id.0].op {
            Op::Attention { pattern, weights, .. } if !weights.is_empty() => Some((pattern, weights)),
            _ => None,
        }
    }

    /// `-norm * Σ [y ln p + (1 - y) ln(1 - p)]` over every entry, with `p`
    /// clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce(&mut self, p: NodeId, target: Matrix<T>, norm: T) -> Result<NodeId> {
        let pv = self.value(p);
        if pv.shape() != target.shape() {
            return Err(Error::dims("bce", pv.shape(), target.shape()));
        }
        let loss = bce_value(pv, &target, norm);
        Ok(self.push(Matrix::filled(1, 1, loss), Op::Bce { p, target, norm }))
    }

    /// Gradients of the `1 × 1` node `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if !self.recording {
            return Err(Error::Precondition("backward on an inference tape".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::dims("backward", self.value(loss).shape(), (1, 1)));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Constant | Op::Param) {
                continue;
            }
            // Interior gradients are dropped once propagated.
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Constant | Op::Param => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b));
                    let gb = self.value(*a).matmul_tn(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, &v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.scale(*s)),
                Op::Relu(a) => {
                    let mut ga = g;
                    for (gv, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        acc(&mut grads, p, g.slice_cols(start, start + w)?);
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        acc(&mut grads, p, g.slice_rows(start, start + h)?);
                        start += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner = yr.iter().zip(gr).fold(T::zero(), |s, (&a, &b)| s + a * b);
                        for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - inner);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let src = self.value(*a);
                    acc(&mut grads, *a, Matrix::filled(src.rows(), src.cols(), g.get(0, 0)));
                }
                Op::LayerNorm { x, gain, bias, cache } => {
                    let (gx, ggain, gbias) = layer_norm_backward(&g, self.value(*gain), cache);
                    acc(&mut grads, *gain, ggain);
                    acc(&mut grads, *bias, gbias);
                    acc(&mut grads, *x, gx);
                }
                Op::Attention { q, k, v, pattern, weights } => {
                    let (gq, gk, gv) = sparse_attention_backward(
                        self.value(*q),
                        self.value(*k),
                        self.value(*v),
                        pattern,
                        weights,
                        &g,
                    );
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gv);
                }
                Op::Bce { p, target, norm } => {
                    let pv = self.value(*p);
                    let lo = T::from_f64_lossy(BCE_CLAMP);
                    let hi = T::one() - lo;
                    let scale = g.get(0, 0) * *norm;
                    let mut gp = Matrix::zeros(pv.rows(), pv.cols());
                    for ((o, &pp), &y) in gp.data_mut().iter_mut().zip(pv.data()).zip(target.data()) {
                        if pp > lo && pp < hi {
                            *o = -scale * (y / pp - (T::one() - y) / (T::one() - pp));
                        }
                    }
                    acc(&mut grads, *p, gp);
                }
            }
        }
        Ok(Gradients { grads, params: self.params.clone() })
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Matrix<T>>], id: NodeId, g: Matrix<T>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (a, &b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn layer_norm_backward<T: Scalar>(
    g: &Matrix<T>,
    gain: &Matrix<T>,
    cache: &LayerNormCache<T>,
) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    let (rows, n) = g.shape();
    let nf = T::from_count(n);
    let mut gx = Matrix::zeros(rows, n);
    let mut ggain = Matrix::zeros(1, n);
    let mut gbias = Matrix::zeros(1, n);
    let mut dxhat = vec![T::zero(); n];
    for r in 0..rows {
        let gr = g.row(r);
        let xh = cache.xhat.row(r);
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for c in 0..n {
            ggain.data_mut()[c] += gr[c] * xh[c];
            gbias.data_mut()[c] += gr[c];
            dxhat[c] = gr[c] * gain.data()[c];
            sum_d += dxhat[c];
            sum_dx += dxhat[c] * xh[c];
        }
        let k = cache.inv_std[r] / nf;
        for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
            *o = k * (nf * dxhat[c] - sum_d - xh[c] * sum_dx);
        }
    }
    (gx, ggain, gbias)
}

pub(crate) fn bce_value<T: Scalar>(p: &Matrix<T>, y: &Matrix<T>, norm: T) -> T {
    let lo = T::from_f64_lossy(BCE_CLAMP);
    let hi = T::one() - lo;
    let mut s = T::zero();
    for (&pp, &yy) in p.data().iter().zip(y.data()) {
        let pc = pp.max(lo).min(hi);
        s += yy * pc.ln() + (T::one() - yy) * (T::one() - pc).ln();
    }
    -norm * s
}

/// Result of [`Tape::backward`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Matrix<T>>>,
    params: HashMap<usize, NodeId>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf node (constant or parameter), if it received one.
    pub fn get(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.grads[id.0].as_ref()
    }

    /// Adds every parameter gradient into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParameterStore<T>) -> Result<()> {
        let mut ids: Vec<_> = self.params.iter().collect();
        ids.sort_unstable_by_key(|(p, _)| **p);
        for (&param, &node) in ids {
            if let Some(g) = self.get(node) {
                store.accumulate_grad(param, g)?;
            }
        }
        Ok(())
    }
}
