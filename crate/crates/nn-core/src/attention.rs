//! Attention masks and multi-head scaled dot-product attention.

use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, NodeId};
use crate::layers::Dense;
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// Boolean attendability matrix over `[query positions x key positions]`;
/// `true` means the query may attend to the key. Masked positions receive
/// exactly zero attention weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    q: usize,
    k: usize,
    data: Vec<bool>,
}

impl AttentionMask {
    pub fn full(q: usize, k: usize) -> Self {
        Self { q, k, data: vec![true; q * k] }
    }

    pub fn from_fn(q: usize, k: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(q * k);
        for i in 0..q {
            for j in 0..k {
                data.push(f(i, j));
            }
        }
        Self { q, k, data }
    }

    /// Causal mask: position `i` attends to positions `0..=i`.
    pub fn causal(t: usize) -> Self {
        Self::from_fn(t, t, |i, j| j <= i)
    }

    /// All queries attend exactly to the keys flagged active.
    pub fn from_key_active(q: usize, active: &[bool]) -> Self {
        Self::from_fn(q, active.len(), |_, j| active[j])
    }

    pub fn queries(&self) -> usize {
        self.q
    }

    pub fn keys(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.k + j]
    }

    pub fn as_flat(&self) -> &[bool] {
        &self.data
    }

    /// Every query row must have at least one attendable key.
    pub fn validate(&self) -> Result<(), crate::NnError> {
        for i in 0..self.q {
            if !self.data[i * self.k..(i + 1) * self.k].iter().any(|&b| b) {
                return Err(crate::NnError::AllMasked(i));
            }
        }
        Ok(())
    }
}

/// Multi-head attention with shared projection dims `[h, h]` and an output
/// projection back to `h`. Requires `h` divisible by the head count.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Dense,
    pub wk: Dense,
    pub wv: Dense,
    pub wo: Dense,
    pub dim: usize,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(prefix: &str, dim: usize, heads: usize) -> Self {
        assert!(
            heads > 0 && dim % heads == 0,
            "attention dim {dim} not divisible by {heads} heads"
        );
        Self {
            wq: Dense::new(format!("{prefix}.wq"), dim, dim),
            wk: Dense::new(format!("{prefix}.wk"), dim, dim),
            wv: Dense::new(format!("{prefix}.wv"), dim, dim),
            wo: Dense::new(format!("{prefix}.wo"), dim, dim),
            dim,
            heads,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        self.wq.init(store, rng);
        self.wk.init(store, rng);
        self.wv.init(store, rng);
        self.wo.init(store, rng);
    }

    /// `q: [nq, h]`, `k/v: [nk, h]` with a `[nq, nk]` mask.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        mask: &AttentionMask,
    ) -> NodeId {
        let (nq, nk) = (g.value(q).rows(), g.value(k).rows());
        assert_eq!(mask.queries(), nq, "mask rows {} vs queries {nq}", mask.queries());
        assert_eq!(mask.keys(), nk, "mask cols {} vs keys {nk}", mask.keys());
        mask.validate().expect("attention mask leaves a query with no keys");

        let qp = self.wq.forward(g, store, q);
        let kp = self.wk.forward(g, store, k);
        let vp = self.wv.forward(g, store, v);

        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads_out = Vec::with_capacity(self.heads);
        for hix in 0..self.heads {
            let (from, to) = (hix * dh, (hix + 1) * dh);
            let qh = g.slice_cols(qp, from, to);
            let kh = g.slice_cols(kp, from, to);
            let vh = g.slice_cols(vp, from, to);
            let scores = g.matmul_nt(qh, kh);
            let scaled = g.scale(scores, scale);
            let attn = g.masked_softmax(scaled, mask.as_flat());
            heads_out.push(g.matmul(attn, vh));
        }
        let mut ctx = heads_out[0];
        for &h in &heads_out[1..] {
            ctx = g.concat_cols(ctx, h);
        }
        self.wo.forward(g, store, ctx)
    }
}
