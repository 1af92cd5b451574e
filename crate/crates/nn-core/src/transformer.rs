//! Pre-norm transformer encoder and decoder stacks.
//!
//! The encoder is a set encoder: no positional encoding, so outputs are
//! equivariant under a consistent permutation of the inputs and mask.

use rand_chacha::ChaCha8Rng;

use crate::attention::{AttentionMask, MultiHeadAttention};
use crate::graph::{Graph, NodeId};
use crate::layers::{Dense, LayerNorm};
use crate::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
struct FeedForward {
    inner: Dense,
    outer: Dense,
}

impl FeedForward {
    fn new(prefix: &str, dim: usize, hidden: usize) -> Self {
        Self {
            inner: Dense::new(format!("{prefix}.ff1"), dim, hidden),
            outer: Dense::new(format!("{prefix}.ff2"), hidden, dim),
        }
    }

    fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        self.inner.init(store, rng);
        self.outer.init(store, rng);
    }

    fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: NodeId) -> NodeId {
        let h = self.inner.forward(g, store, x);
        let a = g.relu(h);
        self.outer.forward(g, store, a)
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    attn: MultiHeadAttention,
    ff: FeedForward,
    ln1: LayerNorm,
    ln2: LayerNorm,
}

/// Stack of self-attention encoder layers with residual connections.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    layers: Vec<EncoderLayer>,
    final_ln: LayerNorm,
    pub dim: usize,
}

impl TransformerEncoder {
    pub fn new(prefix: &str, dim: usize, heads: usize, layers: usize, ff_hidden: usize) -> Self {
        assert!(layers >= 1, "encoder needs at least one layer");
        let layers = (0..layers)
            .map(|i| EncoderLayer {
                attn: MultiHeadAttention::new(&format!("{prefix}.l{i}.attn"), dim, heads),
                ff: FeedForward::new(&format!("{prefix}.l{i}"), dim, ff_hidden),
                ln1: LayerNorm::new(format!("{prefix}.l{i}.ln1"), dim),
                ln2: LayerNorm::new(format!("{prefix}.l{i}.ln2"), dim),
            })
            .collect();
        Self { layers, final_ln: LayerNorm::new(format!("{prefix}.ln_out"), dim), dim }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        for l in &self.layers {
            l.attn.init(store, rng);
            l.ff.init(store, rng);
            l.ln1.init(store);
            l.ln2.init(store);
        }
        self.final_ln.init(store);
    }

    /// `inputs: [n, dim]` with an `[n, n]` self-attention mask applied at
    /// every layer.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        inputs: NodeId,
        mask: &AttentionMask,
    ) -> NodeId {
        let n = g.value(inputs).rows();
        assert!(n > 0, "encoder input is empty");
        let mut x = inputs;
        for l in &self.layers {
            let normed = l.ln1.forward(g, store, x);
            let attn = l.attn.forward(g, store, normed, normed, normed, mask);
            x = g.add(x, attn);
            let normed2 = l.ln2.forward(g, store, x);
            let ff = l.ff.forward(g, store, normed2);
            x = g.add(x, ff);
        }
        self.final_ln.forward(g, store, x)
    }
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_attn: MultiHeadAttention,
    cross_attn: MultiHeadAttention,
    ff: FeedForward,
    ln1: LayerNorm,
    ln2: LayerNorm,
    ln3: LayerNorm,
}

/// Stack of causal self-attention + cross-attention decoder layers.
#[derive(Debug, Clone)]
pub struct TransformerDecoder {
    layers: Vec<DecoderLayer>,
    final_ln: LayerNorm,
    pub dim: usize,
}

impl TransformerDecoder {
    pub fn new(prefix: &str, dim: usize, heads: usize, layers: usize, ff_hidden: usize) -> Self {
        assert!(layers >= 1, "decoder needs at least one layer");
        let layers = (0..layers)
            .map(|i| DecoderLayer {
                self_attn: MultiHeadAttention::new(&format!("{prefix}.l{i}.self"), dim, heads),
                cross_attn: MultiHeadAttention::new(&format!("{prefix}.l{i}.cross"), dim, heads),
                ff: FeedForward::new(&format!("{prefix}.l{i}"), dim, ff_hidden),
                ln1: LayerNorm::new(format!("{prefix}.l{i}.ln1"), dim),
                ln2: LayerNorm::new(format!("{prefix}.l{i}.ln2"), dim),
                ln3: LayerNorm::new(format!("{prefix}.l{i}.ln3"), dim),
            })
            .collect();
        Self { layers, final_ln: LayerNorm::new(format!("{prefix}.ln_out"), dim), dim }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        for l in &self.layers {
            l.self_attn.init(store, rng);
            l.cross_attn.init(store, rng);
            l.ff.init(store, rng);
            l.ln1.init(store);
            l.ln2.init(store);
            l.ln3.init(store);
        }
        self.final_ln.init(store);
    }

    /// `targets: [t, dim]`, causal self-attention; cross-attention over
    /// `memory: [n, dim]` restricted by `memory_mask` (`[t, n]`). Output
    /// position `t` depends only on targets `..=t` and unmasked memory.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        targets: NodeId,
        memory: NodeId,
        memory_mask: &AttentionMask,
    ) -> NodeId {
        let t = g.value(targets).rows();
        let n = g.value(memory).rows();
        assert!(t > 0, "decoder targets are empty");
        assert!(n > 0, "decoder memory is empty");
        let causal = AttentionMask::causal(t);
        let mut x = targets;
        for l in &self.layers {
            let normed = l.ln1.forward(g, store, x);
            let sa = l.self_attn.forward(g, store, normed, normed, normed, &causal);
            x = g.add(x, sa);
            let normed2 = l.ln2.forward(g, store, x);
            let ca = l.cross_attn.forward(g, store, normed2, memory, memory, memory_mask);
            x = g.add(x, ca);
            let normed3 = l.ln3.forward(g, store, x);
            let ff = l.ff.forward(g, store, normed3);
            x = g.add(x, ff);
        }
        self.final_ln.forward(g, store, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::NumArray;
    use rand::Rng;

    #[test]
    fn encoder_is_permutation_equivariant() {
        let dim = 8;
        let enc = TransformerEncoder::new("enc", dim, 2, 2, 16);
        let mut store = ParamStore::<f64>::new();
        let mut rng = stream(11, "enc", &[]);
        enc.init(&mut store, &mut rng);

        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let active = [true, true, false, true];

        let run = |rows: &[Vec<f64>], active: &[bool]| {
            let mut g = Graph::new();
            let x = g.input(NumArray::from_rows(rows));
            let mask = AttentionMask::from_key_active(rows.len(), active);
            let y = enc.forward(&mut g, &store, x, &mask);
            g.value(y).clone()
        };

        let base = run(&rows, &active);
        // swap items 0 and 3 together with their mask entries
        let mut swapped = rows.clone();
        swapped.swap(0, 3);
        let mut active2 = active;
        active2.swap(0, 3);
        let out = run(&swapped, &active2);
        for j in 0..dim {
            assert!((base.at2(0, j) - out.at2(3, j)).abs() < 1e-12);
            assert!((base.at2(3, j) - out.at2(0, j)).abs() < 1e-12);
            assert!((base.at2(1, j) - out.at2(1, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_item_passes_without_mixing() {
        let dim = 8;
        let enc = TransformerEncoder::new("enc", dim, 2, 2, 16);
        let mut store = ParamStore::<f64>::new();
        let mut rng = stream(5, "enc1", &[]);
        enc.init(&mut store, &mut rng);
        let mut g = Graph::new();
        let x = g.input(NumArray::from_rows(&[vec![0.5; dim]]));
        let y = enc.forward(&mut g, &store, x, &AttentionMask::full(1, 1));
        assert_eq!(g.value(y).shape(), &[1, dim]);
        assert!(g.value(y).all_finite());
    }

    #[test]
    fn decoder_is_causal() {
        let dim = 8;
        let dec = TransformerDecoder::new("dec", dim, 2, 2, 16);
        let mut store = ParamStore::<f64>::new();
        let mut rng = stream(7, "dec", &[]);
        dec.init(&mut store, &mut rng);

        let mut rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mem_rows: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();

        let run = |rows: &[Vec<f64>]| {
            let mut g = Graph::new();
            let t = g.input(NumArray::from_rows(rows));
            let m = g.input(NumArray::from_rows(&mem_rows));
            let mask = AttentionMask::full(rows.len(), mem_rows.len());
            let y = dec.forward(&mut g, &store, t, m, &mask);
            g.value(y).clone()
        };

        let base = run(&rows);
        // perturb target position 2: outputs at positions 0 and 1 unchanged
        for v in rows[2].iter_mut() {
            *v += 5.0;
        }
        let after = run(&rows);
        for pos in 0..2 {
            for j in 0..dim {
                assert_eq!(base.at2(pos, j), after.at2(pos, j));
            }
        }
    }

    #[test]
    #[should_panic(expected = "memory is empty")]
    fn decoder_empty_memory_panics() {
        let dim = 4;
        let dec = TransformerDecoder::new("dec", dim, 2, 1, 8);
        let mut store = ParamStore::<f64>::new();
        let mut rng = stream(7, "dec2", &[]);
        dec.init(&mut store, &mut rng);
        let mut g = Graph::new();
        let t = g.input(NumArray::from_rows(&[vec![0.0; dim]]));
        let m = g.input(NumArray::zeros(&[0, dim]));
        dec.forward(&mut g, &store, t, m, &AttentionMask::full(1, 0));
    }

    #[test]
    #[should_panic(expected = "input is empty")]
    fn encoder_empty_input_panics() {
        let dim = 4;
        let enc = TransformerEncoder::new("enc", dim, 2, 1, 8);
        let mut store = ParamStore::<f64>::new();
        let mut rng = stream(7, "enc3", &[]);
        enc.init(&mut store, &mut rng);
        let mut g = Graph::new();
        let x = g.input(NumArray::zeros(&[0, dim]));
        enc.forward(&mut g, &store, x, &AttentionMask::full(0, 0));
    }
}
