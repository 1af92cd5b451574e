//! Eager reverse-mode autodiff tape.
//!
//! A [`Graph`] records one forward computation; values are computed as ops
//! are pushed, and [`Graph::backward`] walks the tape in reverse to fill
//! gradients. Parameter leaves pulled in via [`Graph::param`] collect
//! gradients that can then be accumulated into a [`ParamStore`] with
//! [`Graph::grads_into`]. Shape violations panic with messages naming the
//! offending shapes; fully masked softmax rows panic as well.

use std::collections::HashMap;
use std::rc::Rc;

use crate::array::{self, NumArray};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::NnError;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

const KL_CLAMP: f64 = 1e-12;
const LN_EPS: f64 = 1e-5;

enum Op<S: Scalar> {
    Input,
    Param,
    MatMul { a: NodeId, b: NodeId },
    MatMulNT { a: NodeId, b: NodeId },
    MatVec { m: NodeId, v: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    AddRow { x: NodeId, row: NodeId },
    Affine { x: NodeId, mul: S },
    ScaleByNode { x: NodeId, s: NodeId },
    Relu { x: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    Ln { x: NodeId },
    MaskedSoftmax { x: NodeId, mask: Rc<Vec<bool>> },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    ConcatCols { a: NodeId, b: NodeId },
    ConcatVec { a: NodeId, b: NodeId },
    SliceCols { x: NodeId, from: usize, to: usize },
    StackRows { xs: Vec<NodeId> },
    SliceRow { x: NodeId, row: usize },
    Reshape { x: NodeId },
    SumAll { x: NodeId },
    Dot { a: NodeId, b: NodeId },
    Gather { x: NodeId, idx: usize },
    MeanRows { x: NodeId },
    MaskedEntropy { p: NodeId, mask: Rc<Vec<bool>> },
    KlFromStored { p: NodeId, mu: Vec<S> },
}

struct Node<S: Scalar> {
    value: NumArray<S>,
    grad: Option<NumArray<S>>,
    op: Op<S>,
    /// Cached per-row statistics for fused ops (layer norm).
    aux: Vec<S>,
}

pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    param_nodes: Vec<(String, NodeId)>,
    param_lookup: HashMap<String, NodeId>,
    /// Number of probabilities clamped at the KL floor in this graph.
    pub clamp_events: u64,
    ran_backward: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            param_lookup: HashMap::new(),
            clamp_events: 0,
            ran_backward: false,
        }
    }

    fn push(&mut self, value: NumArray<S>, op: Op<S>, aux: Vec<S>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, grad: None, op, aux });
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &NumArray<S> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> S {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "scalar_value on node of shape {:?}", v.shape());
        v.at(0)
    }

    /// Constant leaf; receives no exported gradient.
    pub fn input(&mut self, value: NumArray<S>) -> NodeId {
        self.push(value, Op::Input, Vec::new())
    }

    pub fn input_vector(&mut self, data: Vec<S>) -> NodeId {
        self.input(NumArray::vector(data))
    }

    pub fn input_scalar(&mut self, v: S) -> NodeId {
        self.input(NumArray::scalar(v))
    }

    /// Leaf holding a copy of a named parameter. Trainable parameters are
    /// registered for gradient export; frozen ones behave as constants.
    /// Repeated calls with the same name return the same node.
    pub fn param(&mut self, store: &ParamStore<S>, name: &str) -> NodeId {
        if let Some(&id) = self.param_lookup.get(name) {
            return id;
        }
        let entry = store.entry(name);
        let id = if entry.trainable {
            let id = self.push(entry.value.clone(), Op::Param, Vec::new());
            self.param_nodes.push((name.to_string(), id));
            id
        } else {
            self.push(entry.value.clone(), Op::Input, Vec::new())
        };
        self.param_lookup.insert(name.to_string(), id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = array::matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul { a, b }, Vec::new())
    }

    /// `a [n,k] x b [m,k]^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = array::matmul_nt(self.value(a), self.value(b));
        self.push(v, Op::MatMulNT { a, b }, Vec::new())
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let out = array::matvec(self.value(m), self.value(v));
        self.push(out, Op::MatVec { m, v }, Vec::new())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape {:?} vs {:?}", va.shape(), vb.shape());
        let mut v = va.clone();
        v.add_assign(vb);
        self.push(v, Op::Add { a, b }, Vec::new())
    }

    pub fn add_n(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "add_n on empty list");
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub shape {:?} vs {:?}", va.shape(), vb.shape());
        let mut v = va.clone();
        v.add_scaled(vb, S::of(-1.0));
        self.push(v, Op::Sub { a, b }, Vec::new())
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape {:?} vs {:?}", va.shape(), vb.shape());
        let data = va
            .as_slice()
            .iter()
            .zip(vb.as_slice())
            .map(|(&x, &y)| x * y)
            .collect();
        let v = NumArray::from_vec(va.shape(), data);
        self.push(v, Op::Mul { a, b }, Vec::new())
    }

    /// `x [n,m] + row [m]` broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let (vx, vr) = (self.value(x), self.value(row));
        assert_eq!(vr.shape(), [vx.cols()], "add_row {:?} + {:?}", vx.shape(), vr.shape());
        let mut v = vx.clone();
        for i in 0..v.rows() {
            let r = v.row_mut(i);
            for (j, &b) in vr.as_slice().iter().enumerate() {
                r[j] += b;
            }
        }
        self.push(v, Op::AddRow { x, row }, Vec::new())
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let (m, a) = (S::of(mul), S::of(add));
        let v = self.value(x).map(|t| m * t + a);
        self.push(v, Op::Affine { x, mul: m }, Vec::new())
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.affine(x, c, 0.0)
    }

    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 1.0)
    }

    /// Elementwise multiply by a scalar node of shape `[1]`.
    pub fn scale_by_node(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let sv = self.scalar_value(s);
        let v = self.value(x).map(|t| t * sv);
        self.push(v, Op::ScaleByNode { x, s }, Vec::new())
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|t| if t > S::zero() { t } else { S::zero() });
        self.push(v, Op::Relu { x }, Vec::new())
    }

    pub fn tanh_of(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|t| t.tanh());
        self.push(v, Op::Tanh { x }, Vec::new())
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let one = S::one();
        let v = self.value(x).map(|t| one / (one + (-t).exp()));
        self.push(v, Op::Sigmoid { x }, Vec::new())
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|t| t.ln());
        self.push(v, Op::Ln { x }, Vec::new())
    }

    /// Row-wise softmax with a boolean mask (`true` = participates). Masked
    /// entries are exactly zero in the output. Rank-1 inputs are treated as a
    /// single row. Panics if any row is fully masked.
    pub fn masked_softmax(&mut self, x: NodeId, mask: &[bool]) -> NodeId {
        let vx = self.value(x);
        assert_eq!(mask.len(), vx.len(), "mask length {} vs input {}", mask.len(), vx.len());
        let (rows, cols) = if vx.rank() == 2 { (vx.rows(), vx.cols()) } else { (1, vx.len()) };
        let mut out = vec![S::zero(); vx.len()];
        for i in 0..rows {
            let base = i * cols;
            let row = &vx.as_slice()[base..base + cols];
            let m = &mask[base..base + cols];
            let mut max = S::neg_infinity();
            for j in 0..cols {
                if m[j] && row[j] > max {
                    max = row[j];
                }
            }
            assert!(
                max > S::neg_infinity(),
                "masked_softmax: row {i} has no unmasked entries"
            );
            let mut z = S::zero();
            for j in 0..cols {
                if m[j] {
                    let e = (row[j] - max).exp();
                    out[base + j] = e;
                    z += e;
                }
            }
            for j in 0..cols {
                if m[j] {
                    out[base + j] = out[base + j] / z;
                }
            }
        }
        let v = NumArray::from_vec(vx.shape(), out);
        self.push(v, Op::MaskedSoftmax { x, mask: Rc::new(mask.to_vec()) }, Vec::new())
    }

    /// Per-row layer normalization with learned gain/bias of shape `[m]`.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let vx = self.value(x);
        let (n, m) = (vx.rows(), vx.cols());
        assert_eq!(self.value(gain).shape(), [m], "layer_norm gain shape");
        assert_eq!(self.value(bias).shape(), [m], "layer_norm bias shape");
        let mut out = NumArray::zeros(&[n, m]);
        let mut aux = Vec::with_capacity(2 * n);
        let fm = S::of(m as f64);
        let eps = S::of(LN_EPS);
        for i in 0..n {
            let row = self.nodes[x.0].value.row(i);
            let mut mean = S::zero();
            for &v in row {
                mean += v;
            }
            mean = mean / fm;
            let mut var = S::zero();
            for &v in row {
                var += (v - mean) * (v - mean);
            }
            var = var / fm;
            let inv = S::one() / (var + eps).sqrt();
            aux.push(mean);
            aux.push(inv);
            let g = self.nodes[gain.0].value.as_slice();
            let b = self.nodes[bias.0].value.as_slice();
            let orow = out.row_mut(i);
            for j in 0..m {
                orow[j] = g[j] * ((row[j] - mean) * inv) + b[j];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias }, aux)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.rows(), vb.rows(), "concat_cols rows {} vs {}", va.rows(), vb.rows());
        let (n, p, q) = (va.rows(), va.cols(), vb.cols());
        let mut out = NumArray::zeros(&[n, p + q]);
        for i in 0..n {
            out.row_mut(i)[..p].copy_from_slice(va.row(i));
            out.row_mut(i)[p..].copy_from_slice(vb.row(i));
        }
        self.push(out, Op::ConcatCols { a, b }, Vec::new())
    }

    pub fn concat_vec(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.rank(), 1, "concat_vec expects rank-1, got {:?}", va.shape());
        assert_eq!(vb.rank(), 1, "concat_vec expects rank-1, got {:?}", vb.shape());
        let mut data = Vec::with_capacity(va.len() + vb.len());
        data.extend_from_slice(va.as_slice());
        data.extend_from_slice(vb.as_slice());
        self.push(NumArray::vector(data), Op::ConcatVec { a, b }, Vec::new())
    }

    /// Column slice of a matrix, or range slice of a vector.
    pub fn slice_cols(&mut self, x: NodeId, from: usize, to: usize) -> NodeId {
        let vx = self.value(x);
        let v = match vx.rank() {
            2 => {
                let (n, m) = (vx.rows(), vx.cols());
                assert!(from < to && to <= m, "slice_cols {from}..{to} of [{n},{m}]");
                let mut out = NumArray::zeros(&[n, to - from]);
                for i in 0..n {
                    out.row_mut(i).copy_from_slice(&vx.row(i)[from..to]);
                }
                out
            }
            1 => {
                assert!(from < to && to <= vx.len(), "slice_cols {from}..{to} of {:?}", vx.shape());
                NumArray::vector(vx.as_slice()[from..to].to_vec())
            }
            r => panic!("slice_cols on rank-{r} array"),
        };
        self.push(v, Op::SliceCols { x, from, to }, Vec::new())
    }

    /// Stacks rank-1 nodes of equal length into a matrix `[t, m]`.
    pub fn stack_rows(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "stack_rows on empty list");
        let m = self.value(xs[0]).len();
        let mut data = Vec::with_capacity(xs.len() * m);
        for &x in xs {
            let v = self.value(x);
            assert_eq!(v.rank(), 1, "stack_rows expects rank-1 nodes");
            assert_eq!(v.len(), m, "stack_rows ragged lengths {} vs {m}", v.len());
            data.extend_from_slice(v.as_slice());
        }
        let v = NumArray::from_vec(&[xs.len(), m], data);
        self.push(v, Op::StackRows { xs: xs.to_vec() }, Vec::new())
    }

    pub fn slice_row(&mut self, x: NodeId, row: usize) -> NodeId {
        let vx = self.value(x);
        assert!(row < vx.rows(), "slice_row {row} of {:?}", vx.shape());
        let v = NumArray::vector(vx.row(row).to_vec());
        self.push(v, Op::SliceRow { x, row }, Vec::new())
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let v = self.value(x).reshaped(shape);
        self.push(v, Op::Reshape { x }, Vec::new())
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self
            .value(x)
            .as_slice()
            .iter()
            .fold(S::zero(), |acc, &v| acc + v);
        self.push(NumArray::scalar(s), Op::SumAll { x }, Vec::new())
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "dot shape {:?} vs {:?}", va.shape(), vb.shape());
        assert_eq!(va.rank(), 1, "dot expects rank-1");
        let s = va
            .as_slice()
            .iter()
            .zip(vb.as_slice())
            .fold(S::zero(), |acc, (&x, &y)| acc + x * y);
        self.push(NumArray::scalar(s), Op::Dot { a, b }, Vec::new())
    }

    pub fn gather(&mut self, x: NodeId, idx: usize) -> NodeId {
        let vx = self.value(x);
        assert_eq!(vx.rank(), 1, "gather expects rank-1");
        assert!(idx < vx.len(), "gather index {idx} of {:?}", vx.shape());
        let v = NumArray::scalar(vx.at(idx));
        self.push(v, Op::Gather { x, idx }, Vec::new())
    }

    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let (n, m) = (vx.rows(), vx.cols());
        let inv = S::of(1.0 / n as f64);
        let mut out = vec![S::zero(); m];
        for i in 0..n {
            for (j, &v) in vx.row(i).iter().enumerate() {
                out[j] += v * inv;
            }
        }
        self.push(NumArray::vector(out), Op::MeanRows { x }, Vec::new())
    }

    /// Entropy `-sum p ln p` of a masked categorical distribution.
    pub fn masked_entropy(&mut self, p: NodeId, mask: &[bool]) -> NodeId {
        let vp = self.value(p);
        assert_eq!(vp.rank(), 1, "masked_entropy expects rank-1");
        assert_eq!(mask.len(), vp.len());
        let mut h = S::zero();
        for (j, &pj) in vp.as_slice().iter().enumerate() {
            if mask[j] && pj > S::zero() {
                h -= pj * pj.ln();
            }
        }
        self.push(
            NumArray::scalar(h),
            Op::MaskedEntropy { p, mask: Rc::new(mask.to_vec()) },
            Vec::new(),
        )
    }

    /// `KL(mu || p) = sum_{mu>0} mu (ln mu - ln max(p, clamp))` against a
    /// stored behavior distribution. Probabilities below the clamp floor are
    /// counted in [`Graph::clamp_events`].
    pub fn kl_from_stored(&mut self, p: NodeId, mu: &[f64]) -> NodeId {
        let vp = self.value(p);
        assert_eq!(vp.rank(), 1, "kl_from_stored expects rank-1");
        assert_eq!(mu.len(), vp.len(), "stored distribution length {} vs {}", mu.len(), vp.len());
        let clamp = S::of(KL_CLAMP);
        let mut kl = S::zero();
        let mut clamped = 0u64;
        for (j, &muj) in mu.iter().enumerate() {
            if muj > 0.0 {
                let mj = S::of(muj);
                let mut pj = vp.at(j);
                if pj < clamp {
                    pj = clamp;
                    clamped += 1;
                }
                kl += mj * (mj.ln() - pj.ln());
            }
        }
        self.clamp_events += clamped;
        let mu_s: Vec<S> = mu.iter().map(|&v| S::of(v)).collect();
        self.push(NumArray::scalar(kl), Op::KlFromStored { p, mu: mu_s }, Vec::new())
    }

    /// Backpropagates from a scalar loss node.
    pub fn backward(&mut self, loss: NodeId) {
        assert!(!self.ran_backward, "backward may run once per graph");
        self.ran_backward = true;
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward from non-scalar node of shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        self.nodes[loss.0].grad = Some(NumArray::scalar(S::one()));

        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Input | Op::Param) {
                continue;
            }
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            let Some(g) = node.grad.take() else { continue };
            match &node.op {
                Op::Input | Op::Param => unreachable!(),
                Op::MatMul { a, b } => {
                    let da = array::matmul_nt(&g, &head[b.0].value);
                    let db = array::matmul_tn(&head[a.0].value, &g);
                    acc(head, *a, da);
                    acc(head, *b, db);
                }
                Op::MatMulNT { a, b } => {
                    let da = array::matmul(&g, &head[b.0].value);
                    let db = array::matmul_tn(&g, &head[a.0].value);
                    acc(head, *a, da);
                    acc(head, *b, db);
                }
                Op::MatVec { m, v } => {
                    let dm = array::outer(&g, &head[v.0].value);
                    let dv = array::matvec_t(&head[m.0].value, &g);
                    acc(head, *m, dm);
                    acc(head, *v, dv);
                }
                Op::Add { a, b } => {
                    acc_ref(head, *a, &g);
                    acc_ref(head, *b, &g);
                }
                Op::Sub { a, b } => {
                    acc_ref(head, *a, &g);
                    acc_scaled(head, *b, &g, S::of(-1.0));
                }
                Op::Mul { a, b } => {
                    if a == b {
                        let x = &head[a.0].value;
                        let mut d = g.clone();
                        for (dv, xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                            *dv = *dv * (*xv + *xv);
                        }
                        acc(head, *a, d);
                    } else {
                        let da = hadamard(&g, &head[b.0].value);
                        let db = hadamard(&g, &head[a.0].value);
                        acc(head, *a, da);
                        acc(head, *b, db);
                    }
                }
                Op::AddRow { x, row } => {
                    let m = g.cols();
                    let mut dr = vec![S::zero(); m];
                    for i in 0..g.rows() {
                        for (j, &gv) in g.row(i).iter().enumerate() {
                            dr[j] += gv;
                        }
                    }
                    acc_ref(head, *x, &g);
                    acc(head, *row, NumArray::vector(dr));
                }
                Op::Affine { x, mul } => {
                    acc_scaled(head, *x, &g, *mul);
                }
                Op::ScaleByNode { x, s } => {
                    let sv = head[s.0].value.at(0);
                    let xv = &head[x.0].value;
                    let mut ds = S::zero();
                    for (gv, xv) in g.as_slice().iter().zip(xv.as_slice()) {
                        ds += *gv * *xv;
                    }
                    acc_scaled(head, *x, &g, sv);
                    acc(head, *s, NumArray::scalar(ds));
                }
                Op::Relu { x } => {
                    let xv = &head[x.0].value;
                    let mut d = g.clone();
                    for (dv, xv) in d.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        if *xv <= S::zero() {
                            *dv = S::zero();
                        }
                    }
                    acc(head, *x, d);
                }
                Op::Tanh { x } => {
                    let y = &node.value;
                    let mut d = g.clone();
                    for (dv, yv) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *dv = *dv * (S::one() - *yv * *yv);
                    }
                    acc(head, *x, d);
                }
                Op::Sigmoid { x } => {
                    let y = &node.value;
                    let mut d = g.clone();
                    for (dv, yv) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *dv = *dv * *yv * (S::one() - *yv);
                    }
                    acc(head, *x, d);
                }
                Op::Ln { x } => {
                    let xv = &head[x.0].value;
                    let mut d = g.clone();
                    for (dv, xv) in d.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        *dv = *dv / *xv;
                    }
                    acc(head, *x, d);
                }
                Op::MaskedSoftmax { x, mask } => {
                    let y = &node.value;
                    let (rows, cols) =
                        if y.rank() == 2 { (y.rows(), y.cols()) } else { (1, y.len()) };
                    let mut d = NumArray::zeros(y.shape());
                    for i in 0..rows {
                        let base = i * cols;
                        let yr = &y.as_slice()[base..base + cols];
                        let gr = &g.as_slice()[base..base + cols];
                        let mr = &mask[base..base + cols];
                        let mut dot = S::zero();
                        for j in 0..cols {
                            if mr[j] {
                                dot += gr[j] * yr[j];
                            }
                        }
                        let dr = &mut d.as_mut_slice()[base..base + cols];
                        for j in 0..cols {
                            if mr[j] {
                                dr[j] = yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                    acc(head, *x, d);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let xv = &head[x.0].value;
                    let gv = &head[gain.0].value;
                    let (n, m) = (xv.rows(), xv.cols());
                    let fm = S::of(m as f64);
                    let mut dx = NumArray::zeros(&[n, m]);
                    let mut dgain = vec![S::zero(); m];
                    let mut dbias = vec![S::zero(); m];
                    for i in 0..n {
                        let mean = node.aux[2 * i];
                        let inv = node.aux[2 * i + 1];
                        let xr = xv.row(i);
                        let gr = g.row(i);
                        // dxhat = g * gain; means over the row
                        let mut mean_dxh = S::zero();
                        let mut mean_dxh_xh = S::zero();
                        for j in 0..m {
                            let xh = (xr[j] - mean) * inv;
                            let dxh = gr[j] * gv.at(j);
                            dgain[j] += gr[j] * xh;
                            dbias[j] += gr[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh;
                        }
                        mean_dxh = mean_dxh / fm;
                        mean_dxh_xh = mean_dxh_xh / fm;
                        let dr = dx.row_mut(i);
                        for j in 0..m {
                            let xh = (xr[j] - mean) * inv;
                            let dxh = gr[j] * gv.at(j);
                            dr[j] = inv * (dxh - mean_dxh - xh * mean_dxh_xh);
                        }
                    }
                    acc(head, *x, dx);
                    acc(head, *gain, NumArray::vector(dgain));
                    acc(head, *bias, NumArray::vector(dbias));
                }
                Op::ConcatCols { a, b } => {
                    let p = head[a.0].value.cols();
                    let q = head[b.0].value.cols();
                    let n = g.rows();
                    let mut da = NumArray::zeros(&[n, p]);
                    let mut db = NumArray::zeros(&[n, q]);
                    for i in 0..n {
                        da.row_mut(i).copy_from_slice(&g.row(i)[..p]);
                        db.row_mut(i).copy_from_slice(&g.row(i)[p..]);
                    }
                    acc(head, *a, da);
                    acc(head, *b, db);
                }
                Op::ConcatVec { a, b } => {
                    let p = head[a.0].value.len();
                    let da = NumArray::vector(g.as_slice()[..p].to_vec());
                    let db = NumArray::vector(g.as_slice()[p..].to_vec());
                    acc(head, *a, da);
                    acc(head, *b, db);
                }
                Op::SliceCols { x, from, to } => {
                    let xv = &head[x.0].value;
                    let mut d = NumArray::zeros(xv.shape());
                    match xv.rank() {
                        2 => {
                            for i in 0..xv.rows() {
                                d.row_mut(i)[*from..*to].copy_from_slice(g.row(i));
                            }
                        }
                        _ => {
                            d.as_mut_slice()[*from..*to].copy_from_slice(g.as_slice());
                        }
                    }
                    acc(head, *x, d);
                }
                Op::StackRows { xs } => {
                    for (i, &x) in xs.iter().enumerate() {
                        acc(head, x, NumArray::vector(g.row(i).to_vec()));
                    }
                }
                Op::SliceRow { x, row } => {
                    let xv = &head[x.0].value;
                    let mut d = NumArray::zeros(xv.shape());
                    d.row_mut(*row).copy_from_slice(g.as_slice());
                    acc(head, *x, d);
                }
                Op::Reshape { x } => {
                    let shape = head[x.0].value.shape().to_vec();
                    acc(head, *x, g.reshaped(&shape));
                }
                Op::SumAll { x } => {
                    let gx = g.at(0);
                    let xv = &head[x.0].value;
                    let d = NumArray::from_vec(xv.shape(), vec![gx; xv.len()]);
                    acc(head, *x, d);
                }
                Op::Dot { a, b } => {
                    let gs = g.at(0);
                    let da = head[b.0].value.map(|v| v * gs);
                    let db = head[a.0].value.map(|v| v * gs);
                    acc(head, *a, da);
                    acc(head, *b, db);
                }
                Op::Gather { x, idx } => {
                    let xv = &head[x.0].value;
                    let mut d = NumArray::zeros(xv.shape());
                    d.as_mut_slice()[*idx] = g.at(0);
                    acc(head, *x, d);
                }
                Op::MeanRows { x } => {
                    let xv = &head[x.0].value;
                    let (n, m) = (xv.rows(), xv.cols());
                    let inv = S::of(1.0 / n as f64);
                    let mut d = NumArray::zeros(&[n, m]);
                    for i in 0..n {
                        let dr = d.row_mut(i);
                        for j in 0..m {
                            dr[j] = g.at(j) * inv;
                        }
                    }
                    acc(head, *x, d);
                }
                Op::MaskedEntropy { p, mask } => {
                    let gs = g.at(0);
                    let pv = &head[p.0].value;
                    let mut d = NumArray::zeros(pv.shape());
                    for (j, &pj) in pv.as_slice().iter().enumerate() {
                        if mask[j] && pj > S::zero() {
                            d.as_mut_slice()[j] = -gs * (pj.ln() + S::one());
                        }
                    }
                    acc(head, *p, d);
                }
                Op::KlFromStored { p, mu } => {
                    let gs = g.at(0);
                    let pv = &head[p.0].value;
                    let clamp = S::of(KL_CLAMP);
                    let mut d = NumArray::zeros(pv.shape());
                    for (j, &muj) in mu.iter().enumerate() {
                        if muj > S::zero() {
                            let pj = pv.at(j);
                            if pj >= clamp {
                                d.as_mut_slice()[j] = -gs * muj / pj;
                            }
                        }
                    }
                    acc(head, *p, d);
                }
            }
        }
    }

    /// Adds the gradient of every trainable parameter node into the store's
    /// accumulators. Parameters untouched by the loss contribute nothing.
    pub fn grads_into(&self, store: &mut ParamStore<S>) -> Result<(), NnError> {
        for (name, id) in &self.param_nodes {
            if let Some(g) = &self.nodes[id.0].grad {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    /// Gradient of a parameter node after [`Graph::backward`], if any.
    pub fn param_grad(&self, name: &str) -> Option<&NumArray<S>> {
        let id = self.param_lookup.get(name)?;
        self.nodes[id.0].grad.as_ref()
    }
}

fn hadamard<S: Scalar>(a: &NumArray<S>, b: &NumArray<S>) -> NumArray<S> {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| x * y)
        .collect();
    NumArray::from_vec(a.shape(), data)
}

fn acc<S: Scalar>(head: &mut [Node<S>], p: NodeId, contrib: NumArray<S>) {
    let n = &mut head[p.0];
    match &mut n.grad {
        Some(g) => g.add_assign(&contrib),
        None => n.grad = Some(contrib),
    }
}

fn acc_ref<S: Scalar>(head: &mut [Node<S>], p: NodeId, contrib: &NumArray<S>) {
    let n = &mut head[p.0];
    match &mut n.grad {
        Some(g) => g.add_assign(contrib),
        None => n.grad = Some(contrib.clone()),
    }
}

fn acc_scaled<S: Scalar>(head: &mut [Node<S>], p: NodeId, contrib: &NumArray<S>, c: S) {
    let n = &mut head[p.0];
    match &mut n.grad {
        Some(g) => g.add_scaled(contrib, c),
        None => {
            let mut d = contrib.clone();
            d.scale_in_place(c);
            n.grad = Some(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_softmax_basics() {
        let mut g = Graph::<f64>::new();
        let x = g.input_vector(vec![0.0, 0.0]);
        let p = g.masked_softmax(x, &[true, true]);
        assert_eq!(g.value(p).as_slice(), &[0.5, 0.5]);

        let x = g.input_vector(vec![5.0, -100.0]);
        let p = g.masked_softmax(x, &[true, false]);
        assert_eq!(g.value(p).as_slice(), &[1.0, 0.0]);

        let x = g.input_vector(vec![1.0, 2.0, 3.0]);
        let p = g.masked_softmax(x, &[true, true, true]);
        let v = g.value(p).as_slice();
        assert!((v[0] - 0.0900).abs() < 1e-4);
        assert!((v[1] - 0.2447).abs() < 1e-4);
        assert!((v[2] - 0.6652).abs() < 1e-4);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn masked_softmax_shift_invariant() {
        let mut g = Graph::<f64>::new();
        let x = g.input_vector(vec![0.3, -1.2, 2.0, 0.0]);
        let mask = [true, false, true, true];
        let p1 = g.masked_softmax(x, &mask);
        let shifted = g.affine(x, 1.0, 17.5);
        let p2 = g.masked_softmax(shifted, &mask);
        for (a, b) in g.value(p1).as_slice().iter().zip(g.value(p2).as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "no unmasked entries")]
    fn masked_softmax_all_masked_panics() {
        let mut g = Graph::<f64>::new();
        let x = g.input_vector(vec![1.0, 2.0]);
        g.masked_softmax(x, &[false, false]);
    }

    #[test]
    fn backward_chain_rule_simple() {
        // f(x) = sum((2x + 1)^2), df/dx = 4(2x+1)
        let mut g = Graph::<f64>::new();
        let mut store = ParamStore::new();
        store.insert("x", NumArray::vector(vec![1.0, -0.5]), true);
        let x = g.param(&store, "x");
        let y = g.affine(x, 2.0, 1.0);
        let sq = g.mul(y, y);
        let loss = g.sum_all(sq);
        g.backward(loss);
        let got = g.param_grad("x").unwrap();
        assert_eq!(got.as_slice(), &[12.0, 0.0]);
    }

    #[test]
    fn reused_param_accumulates() {
        // f = sum(x) + dot(x, x); df/dx = 1 + 2x
        let mut g = Graph::<f64>::new();
        let mut store = ParamStore::new();
        store.insert("x", NumArray::vector(vec![3.0]), true);
        let x1 = g.param(&store, "x");
        let x2 = g.param(&store, "x");
        assert_eq!(x1, x2);
        let s = g.sum_all(x1);
        let d = g.dot(x1, x2);
        let loss = g.add(s, d);
        g.backward(loss);
        assert_eq!(g.param_grad("x").unwrap().as_slice(), &[7.0]);
    }
}
