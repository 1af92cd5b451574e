//! Adam optimizer over a [`ParamStore`].

use std::collections::HashMap;

use crate::array::NumArray;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::NnError;

/// Per-parameter first/second moments plus a shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: HashMap<String, NumArray<S>>,
    v: HashMap<String, NumArray<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        self.m.clear();
        self.v.clear();
    }

    pub fn moments(&self, name: &str) -> Option<(&NumArray<S>, &NumArray<S>)> {
        Some((self.m.get(name)?, self.v.get(name)?))
    }

    pub fn set_moments(&mut self, name: &str, m: NumArray<S>, v: NumArray<S>) {
        self.m.insert(name.to_string(), m);
        self.v.insert(name.to_string(), v);
    }
}

/// One bias-corrected Adam update over all trainable parameters. Gradients
/// must have been populated (see [`ParamStore::zero_grads`]); they are
/// consumed by the step. Frozen parameters are untouched.
pub fn adam_step<S: Scalar>(store: &mut ParamStore<S>, state: &mut AdamState<S>) -> Result<(), NnError> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (S::of(state.beta1), S::of(state.beta2));
    let one_m_b1 = S::of(1.0 - state.beta1);
    let one_m_b2 = S::of(1.0 - state.beta2);
    let lr = S::of(state.lr);
    let eps = S::of(state.epsilon);
    let inv_bc1 = S::of(1.0 / bc1);
    let inv_bc2 = S::of(1.0 / bc2);

    for entry in store.entries_mut() {
        if !entry.trainable {
            continue;
        }
        let grad = entry
            .grad
            .take()
            .ok_or_else(|| NnError::MissingGrad(entry.name.clone()))?;
        let m = state
            .m
            .entry(entry.name.clone())
            .or_insert_with(|| NumArray::zeros(entry.value.shape()));
        let v = state
            .v
            .entry(entry.name.clone())
            .or_insert_with(|| NumArray::zeros(entry.value.shape()));
        if m.shape() != entry.value.shape() {
            // parameter grew (appended rows); grow moments with zeros
            *m = grow_like(m, &entry.value);
            *v = grow_like(v, &entry.value);
        }
        let p = entry.value.as_mut_slice();
        let gs = grad.as_slice();
        let ms = m.as_mut_slice();
        let vs = v.as_mut_slice();
        for i in 0..p.len() {
            ms[i] = b1 * ms[i] + one_m_b1 * gs[i];
            vs[i] = b2 * vs[i] + one_m_b2 * gs[i] * gs[i];
            let mhat = ms[i] * inv_bc1;
            let vhat = vs[i] * inv_bc2;
            p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Copies `old` into the prefix of a zero array shaped like `target`.
/// Valid for append-only growth where existing data keeps its flat offsets
/// (row growth on row-major matrices with unchanged column count).
fn grow_like<S: Scalar>(old: &NumArray<S>, target: &NumArray<S>) -> NumArray<S> {
    let mut out = NumArray::zeros(target.shape());
    let n = old.len().min(out.len());
    out.as_mut_slice()[..n].copy_from_slice(&old.as_slice()[..n]);
    out
}
