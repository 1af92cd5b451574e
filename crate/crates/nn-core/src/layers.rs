//! Basic parameterized layers.

use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::NumArray;

/// Fully connected layer `y = x W + b` with `W: [din, dout]`.
#[derive(Debug, Clone)]
pub struct Dense {
    prefix: String,
    pub din: usize,
    pub dout: usize,
}

impl Dense {
    pub fn new(prefix: impl Into<String>, din: usize, dout: usize) -> Self {
        Self { prefix: prefix.into(), din, dout }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        store.insert_init(&self.weight_name(), &[self.din, self.dout], self.din, rng);
        store.insert(&self.bias_name(), NumArray::zeros(&[self.dout]), true);
    }

    /// Forward for `x: [n, din]` (rank 2) or a single `[din]` vector (rank 1).
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: NodeId) -> NodeId {
        let w = g.param(store, &self.weight_name());
        let b = g.param(store, &self.bias_name());
        let vx = g.value(x);
        assert_eq!(
            vx.shape().last().copied(),
            Some(self.din),
            "linear layer {}: input shape {:?} vs weight [{}, {}]",
            self.prefix,
            vx.shape(),
            self.din,
            self.dout
        );
        match vx.rank() {
            2 => {
                let y = g.matmul(x, w);
                g.add_row(y, b)
            }
            1 => {
                let xr = g.reshape(x, &[1, self.din]);
                let y = g.matmul(xr, w);
                let yb = g.add_row(y, b);
                g.reshape(yb, &[self.dout])
            }
            r => panic!("linear layer {}: rank-{r} input unsupported", self.prefix),
        }
    }
}

/// Per-row layer normalization with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    prefix: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(prefix: impl Into<String>, dim: usize) -> Self {
        Self { prefix: prefix.into(), dim }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>) {
        let ones = NumArray::from_vec(&[self.dim], vec![S::one(); self.dim]);
        store.insert(&format!("{}.g", self.prefix), ones, true);
        store.insert(&format!("{}.b", self.prefix), NumArray::zeros(&[self.dim]), true);
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: NodeId) -> NodeId {
        let gain = g.param(store, &format!("{}.g", self.prefix));
        let bias = g.param(store, &format!("{}.b", self.prefix));
        g.layer_norm(x, gain, bias)
    }
}
