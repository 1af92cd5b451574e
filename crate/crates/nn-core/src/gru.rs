//! Gated recurrent unit stack.

use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::NumArray;

/// Multi-layer GRU. Per layer and step, with gates `r`, `z` and candidate `n`:
///
/// ```text
/// r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
///
/// Weight layout: `w_ih: [3H, din]`, `w_hh: [3H, H]` with gate order r, z, n.
#[derive(Debug, Clone)]
pub struct GruStack {
    prefix: String,
    pub layers: usize,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruStack {
    pub fn new(prefix: impl Into<String>, layers: usize, input_dim: usize, hidden: usize) -> Self {
        assert!(layers >= 1, "GRU needs at least one layer");
        Self { prefix: prefix.into(), layers, input_dim, hidden }
    }

    fn names(&self, layer: usize) -> (String, String, String, String) {
        let p = &self.prefix;
        (
            format!("{p}.l{layer}.w_ih"),
            format!("{p}.l{layer}.w_hh"),
            format!("{p}.l{layer}.b_ih"),
            format!("{p}.l{layer}.b_hh"),
        )
    }

    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        for l in 0..self.layers {
            let din = if l == 0 { self.input_dim } else { self.hidden };
            let (w_ih, w_hh, b_ih, b_hh) = self.names(l);
            store.insert_init(&w_ih, &[3 * self.hidden, din], din, rng);
            store.insert_init(&w_hh, &[3 * self.hidden, self.hidden], self.hidden, rng);
            store.insert(&b_ih, NumArray::zeros(&[3 * self.hidden]), true);
            store.insert(&b_hh, NumArray::zeros(&[3 * self.hidden]), true);
        }
    }

    /// Zero initial hidden state, one node of shape `[hidden]` per layer.
    pub fn zero_state<S: Scalar>(&self, g: &mut Graph<S>) -> Vec<NodeId> {
        (0..self.layers)
            .map(|_| g.input(NumArray::zeros(&[self.hidden])))
            .collect()
    }

    /// Advances all layers one step. `x: [input_dim]`; `hidden` is updated in
    /// place; returns the top layer output `[hidden]`.
    pub fn step<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
        hidden: &mut Vec<NodeId>,
    ) -> NodeId {
        assert_eq!(hidden.len(), self.layers, "hidden state layer count");
        let mut inp = x;
        for l in 0..self.layers {
            let (w_ih, w_hh, b_ih, b_hh) = self.names(l);
            let w_ih = g.param(store, &w_ih);
            let w_hh = g.param(store, &w_hh);
            let b_ih = g.param(store, &b_ih);
            let b_hh = g.param(store, &b_hh);
            let h = hidden[l];

            let gi_lin = g.matvec(w_ih, inp);
            let gi = g.add(gi_lin, b_ih);
            let gh_lin = g.matvec(w_hh, h);
            let gh = g.add(gh_lin, b_hh);

            let hsz = self.hidden;
            let gi_r = g.slice_cols(gi, 0, hsz);
            let gi_z = g.slice_cols(gi, hsz, 2 * hsz);
            let gi_n = g.slice_cols(gi, 2 * hsz, 3 * hsz);
            let gh_r = g.slice_cols(gh, 0, hsz);
            let gh_z = g.slice_cols(gh, hsz, 2 * hsz);
            let gh_n = g.slice_cols(gh, 2 * hsz, 3 * hsz);

            let r_pre = g.add(gi_r, gh_r);
            let r = g.sigmoid(r_pre);
            let z_pre = g.add(gi_z, gh_z);
            let z = g.sigmoid(z_pre);
            let gated = g.mul(r, gh_n);
            let n_pre = g.add(gi_n, gated);
            let n = g.tanh_of(n_pre);

            let keep = g.mul(z, h);
            let one_minus_z = g.one_minus(z);
            let new = g.mul(one_minus_z, n);
            let h_next = g.add(keep, new);
            hidden[l] = h_next;
            inp = h_next;
        }
        inp
    }

    /// Runs a whole sequence `[t, input_dim]` from a zero hidden state and
    /// returns the stacked top-layer outputs `[t, hidden]`.
    pub fn forward_sequence<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        inputs: NodeId,
    ) -> NodeId {
        let t = g.value(inputs).rows();
        assert!(t >= 1, "GRU sequence is empty");
        let mut hidden = self.zero_state(g);
        let mut outs = Vec::with_capacity(t);
        for i in 0..t {
            let x = g.slice_row(inputs, i);
            outs.push(self.step(g, store, x, &mut hidden));
        }
        g.stack_rows(&outs)
    }
}
