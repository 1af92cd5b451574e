//! Named parameter storage with per-parameter trainable flags and gradient
//! accumulators. Insertion order is preserved so optimizer sweeps and
//! checkpoint records are deterministic.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::array::NumArray;
use crate::scalar::Scalar;
use crate::NnError;

#[derive(Debug, Clone)]
pub struct ParamEntry<S: Scalar> {
    pub name: String,
    pub value: NumArray<S>,
    pub trainable: bool,
    pub grad: Option<NumArray<S>>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<S: Scalar> {
    entries: Vec<ParamEntry<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: NumArray<S>, trainable: bool) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name: {name}"
        );
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry { name: name.to_string(), value, trainable, grad: None });
    }

    /// Registers a trainable matrix initialized uniform in ±1/sqrt(fan_in).
    pub fn insert_init(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n).map(|_| S::of(rng.gen_range(-bound..bound))).collect();
        self.insert(name, NumArray::from_vec(shape, data), true);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &NumArray<S> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter: {name}"));
        &self.entries[i].value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut NumArray<S> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter: {name}"));
        &mut self.entries[i].value
    }

    pub fn entry(&self, name: &str) -> &ParamEntry<S> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter: {name}"));
        &self.entries[i]
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entry(name).trainable
    }

    /// Replaces the value of an existing parameter (shape may change; used by
    /// append-style growth on registries and frozen tables).
    pub fn replace_value(&mut self, name: &str, value: NumArray<S>) {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter: {name}"));
        self.entries[i].value = value;
        self.entries[i].grad = None;
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<S>> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_param_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    /// Resets all trainable gradient accumulators to zeros.
    pub fn zero_grads(&mut self) {
        for e in self.entries.iter_mut() {
            if e.trainable {
                e.grad = Some(NumArray::zeros(e.value.shape()));
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for e in self.entries.iter_mut() {
            e.grad = None;
        }
    }

    /// Adds `grad` into the accumulator of `name`.
    pub fn accumulate_grad(&mut self, name: &str, grad: &NumArray<S>) -> Result<(), NnError> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        let e = &mut self.entries[i];
        if !e.trainable {
            return Ok(()); // frozen parameters receive no updates
        }
        if grad.shape() != e.value.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "gradient shape {:?} vs parameter {:?} for {name}",
                grad.shape(),
                e.value.shape()
            )));
        }
        match &mut e.grad {
            Some(acc) => acc.add_assign(grad),
            None => e.grad = Some(grad.clone()),
        }
        Ok(())
    }

    /// Scales all gradients so their global L2 norm does not exceed `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let mut sq = 0.0;
        for e in self.entries.iter() {
            if let Some(g) = &e.grad {
                sq += g.sq_l2().as_f64();
            }
        }
        let norm = sq.sqrt();
        if norm > max_norm && norm > 0.0 {
            let c = S::of(max_norm / norm);
            for e in self.entries.iter_mut() {
                if let Some(g) = &mut e.grad {
                    g.scale_in_place(c);
                }
            }
        }
        norm
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry<S>] {
        &mut self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_stable() {
        let mut ps = ParamStore::<f64>::new();
        ps.insert("b", NumArray::vector(vec![1.0]), true);
        ps.insert("a", NumArray::vector(vec![2.0]), false);
        let names: Vec<_> = ps.names().collect();
        assert_eq!(names, vec!["b", "a"]);
        assert_eq!(ps.trainable_param_count(), 1);
    }

    #[test]
    fn frozen_params_ignore_gradients() {
        let mut ps = ParamStore::<f64>::new();
        ps.insert("frozen", NumArray::vector(vec![1.0, 2.0]), false);
        ps.zero_grads();
        ps.accumulate_grad("frozen", &NumArray::vector(vec![5.0, 5.0])).unwrap();
        assert!(ps.entry("frozen").grad.is_none());
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_name_panics() {
        let mut ps = ParamStore::<f64>::new();
        ps.insert("w", NumArray::vector(vec![1.0]), true);
        ps.insert("w", NumArray::vector(vec![1.0]), true);
    }
}
