//! Finite-difference validation for every layer type.
//!
//! Each case builds a scalar loss from parameters, runs one backward pass,
//! and compares the analytic gradients against central differences computed
//! by forward-only re-evaluation.

use nn_core::attention::AttentionMask;
use nn_core::gradcheck::grad_check;
use nn_core::graph::{Graph, NodeId};
use nn_core::rng::stream;
use nn_core::{Dense, GruStack, LayerNorm, MultiHeadAttention, NumArray, ParamStore, TransformerDecoder, TransformerEncoder};
use rand::Rng;

/// Runs backward once, then compares against finite differences.
fn check_gradients<F>(store: &mut ParamStore<f64>, build: F, tol: f64, label: &str)
where
    F: Fn(&ParamStore<f64>, &mut Graph<f64>) -> NodeId,
{
    store.zero_grads();
    let mut g = Graph::new();
    let loss = build(store, &mut g);
    g.backward(loss);
    g.grads_into(store).unwrap();

    let forward = |ps: &ParamStore<f64>| {
        let mut g = Graph::new();
        let loss = build(ps, &mut g);
        g.scalar_value(loss)
    };
    let mut rng = stream(99, label, &[]);
    let report = grad_check(store, forward, 1e-5, 400, &mut rng).unwrap();
    assert!(
        report.max_rel_err < tol,
        "{label}: max rel err {} at {:?} over {} coords",
        report.max_rel_err,
        report.worst,
        report.coords_checked
    );
}

fn rand_input(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> NumArray<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    NumArray::from_vec(&[rows, cols], data)
}

#[test]
fn linear_layer_matches_finite_differences() {
    let mut store = ParamStore::new();
    let layer = Dense::new("lin", 5, 3);
    let mut rng = stream(1, "lin", &[]);
    layer.init(&mut store, &mut rng);
    let x = rand_input(&mut rng, 4, 5);
    check_gradients(
        &mut store,
        move |ps, g| {
            let xin = g.input(x.clone());
            let y = layer.forward(g, ps, xin);
            g.sum_all(y)
        },
        1e-6,
        "linear",
    );
}

#[test]
fn masked_softmax_matches_finite_differences() {
    let mut store = ParamStore::new();
    store.insert("logits", NumArray::vector(vec![0.3, -1.0, 2.0, 0.7, -0.2]), true);
    let mask = [true, false, true, true, false];
    // weighted sum of probabilities keeps the loss sensitive to all coords
    let w = [0.9, 0.0, -1.3, 0.4, 0.0];
    check_gradients(
        &mut store,
        move |ps, g| {
            let x = g.param(ps, "logits");
            let p = g.masked_softmax(x, &mask);
            let wn = g.input_vector(w.to_vec());
            g.dot(p, wn)
        },
        1e-7,
        "masked_softmax",
    );
}

#[test]
fn layer_norm_matches_finite_differences() {
    let mut store = ParamStore::new();
    let ln = LayerNorm::new("ln", 6);
    ln.init(&mut store);
    let mut rng = stream(2, "ln", &[]);
    store.insert("x", rand_input(&mut rng, 3, 6), true);
    let w = rand_input(&mut rng, 3, 6);
    check_gradients(
        &mut store,
        move |ps, g| {
            let x = g.param(ps, "x");
            let y = ln.forward(g, ps, x);
            let wn = g.input(w.clone());
            let prod = g.mul(y, wn);
            g.sum_all(prod)
        },
        1e-6,
        "layer_norm",
    );
}

#[test]
fn multi_head_attention_matches_finite_differences() {
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new("attn", 8, 2);
    let mut rng = stream(3, "mha", &[]);
    mha.init(&mut store, &mut rng);
    store.insert("x", rand_input(&mut rng, 4, 8), true);
    let mask = AttentionMask::from_key_active(4, &[true, true, false, true]);
    let w = rand_input(&mut rng, 4, 8);
    check_gradients(
        &mut store,
        move |ps, g| {
            let x = g.param(ps, "x");
            let y = mha.forward(g, ps, x, x, x, &mask);
            let wn = g.input(w.clone());
            let prod = g.mul(y, wn);
            g.sum_all(prod)
        },
        1e-4,
        "multi_head_attention",
    );
}

#[test]
fn transformer_encoder_matches_finite_differences() {
    let mut store = ParamStore::new();
    let enc = TransformerEncoder::new("enc", 8, 2, 2, 16);
    let mut rng = stream(4, "enc", &[]);
    enc.init(&mut store, &mut rng);
    store.insert("x", rand_input(&mut rng, 3, 8), true);
    let mask = AttentionMask::from_key_active(3, &[true, false, true]);
    let w = rand_input(&mut rng, 3, 8);
    check_gradients(
        &mut store,
        move |ps, g| {
            let x = g.param(ps, "x");
            let y = enc.forward(g, ps, x, &mask);
            let wn = g.input(w.clone());
            let prod = g.mul(y, wn);
            g.sum_all(prod)
        },
        1e-4,
        "transformer_encoder",
    );
}

#[test]
fn transformer_decoder_matches_finite_differences() {
    let mut store = ParamStore::new();
    let dec = TransformerDecoder::new("dec", 8, 2, 2, 16);
    let mut rng = stream(5, "dec", &[]);
    dec.init(&mut store, &mut rng);
    store.insert("targets", rand_input(&mut rng, 3, 8), true);
    store.insert("memory", rand_input(&mut rng, 4, 8), true);
    let mask = AttentionMask::from_key_active(3, &[true, true, false, true]);
    let w = rand_input(&mut rng, 3, 8);
    check_gradients(
        &mut store,
        move |ps, g| {
            let t = g.param(ps, "targets");
            let m = g.param(ps, "memory");
            let y = dec.forward(g, ps, t, m, &mask);
            let wn = g.input(w.clone());
            let prod = g.mul(y, wn);
            g.sum_all(prod)
        },
        1e-4,
        "transformer_decoder",
    );
}

#[test]
fn gru_matches_finite_differences() {
    let mut store = ParamStore::new();
    let gru = GruStack::new("gru", 2, 5, 6);
    let mut rng = stream(6, "gru", &[]);
    gru.init(&mut store, &mut rng);
    store.insert("x", rand_input(&mut rng, 4, 5), true);
    let w = rand_input(&mut rng, 4, 6);
    check_gradients(
        &mut store,
        move |ps, g| {
            let x = g.param(ps, "x");
            let y = gru.forward_sequence(g, ps, x);
            let wn = g.input(w.clone());
            let prod = g.mul(y, wn);
            g.sum_all(prod)
        },
        1e-5,
        "gru",
    );
}

#[test]
fn entropy_and_kl_match_finite_differences() {
    let mut store = ParamStore::new();
    store.insert("logits", NumArray::vector(vec![0.5, -0.7, 1.2, 0.0]), true);
    let mask = [true, true, false, true];
    let mu = [0.2, 0.5, 0.0, 0.3];
    check_gradients(
        &mut store,
        move |ps, g| {
            let x = g.param(ps, "logits");
            let p = g.masked_softmax(x, &mask);
            let h = g.masked_entropy(p, &mask);
            let kl = g.kl_from_stored(p, &mu);
            let hs = g.scale(h, 0.7);
            g.add(hs, kl)
        },
        1e-7,
        "entropy_kl",
    );
}

#[test]
fn gated_mixture_matches_finite_differences() {
    // The domain-gate pattern: sigmoid gate mixing two masked softmaxes.
    let mut store = ParamStore::new();
    store.insert("logits", NumArray::vector(vec![0.4, -0.3, 0.9, 0.1]), true);
    store.insert("gate", NumArray::vector(vec![0.25]), true);
    let curr = [true, false, false, true];
    let non = [false, true, true, false];
    let w = [1.0, -0.5, 0.25, 0.75];
    check_gradients(
        &mut store,
        move |ps, g| {
            let logits = g.param(ps, "logits");
            let gate = g.param(ps, "gate");
            let p = g.sigmoid(gate);
            let pa = g.masked_softmax(logits, &curr);
            let pb = g.masked_softmax(logits, &non);
            let qa = g.scale_by_node(pa, p);
            let one_m = g.one_minus(p);
            let qb = g.scale_by_node(pb, one_m);
            let mix = g.add(qa, qb);
            let wn = g.input_vector(w.to_vec());
            let s = g.dot(mix, wn);
            let lp = g.gather(mix, 2);
            let lpl = g.ln(lp);
            g.add(s, lpl)
        },
        1e-7,
        "gated_mixture",
    );
}
