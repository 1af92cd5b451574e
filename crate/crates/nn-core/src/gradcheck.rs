//! Finite-difference validation of backprop gradients.
//!
//! The checker re-evaluates a forward-only closure under central
//! perturbations of individual parameter coordinates and compares against
//! the analytic gradients accumulated in the store. It never touches the
//! backward pass, so it is an independent oracle for it. Use 64-bit scalars.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::NnError;

/// Relative error between a finite-difference and a backprop gradient. The
/// denominator floor keeps central-difference roundoff on (mathematically)
/// zero gradients from registering as error; a real mismatch still has to
/// clear tolerance * floor in absolute terms.
pub fn rel_err(fd: f64, bp: f64) -> f64 {
    (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-4)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Parameter name and flat coordinate of the worst error.
    pub worst: Option<(String, usize)>,
}

/// Compares analytic gradients in `store` (populated by the caller via a
/// backward pass) against central finite differences of `loss_fn` with step
/// `eps`. When the store holds more than `max_coords` trainable coordinates,
/// a random subsample of at least 100 (or all, if fewer) is checked.
pub fn grad_check<S, F>(
    store: &mut ParamStore<S>,
    loss_fn: F,
    eps: f64,
    max_coords: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport, NnError>
where
    S: Scalar,
    F: Fn(&ParamStore<S>) -> S,
{
    let names: Vec<String> = store
        .iter()
        .filter(|e| e.trainable)
        .map(|e| e.name.clone())
        .collect();

    // collect (name, coord) candidates
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (ni, name) in names.iter().enumerate() {
        for ci in 0..store.get(name).len() {
            coords.push((ni, ci));
        }
    }
    let budget = max_coords.max(100);
    if coords.len() > budget {
        // partial Fisher-Yates for a uniform subsample
        for i in 0..budget {
            let j = rng.gen_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(budget);
    }

    let base = loss_fn(store).as_f64();
    if !base.is_finite() {
        return Err(NnError::NonFinite("grad_check loss".into()));
    }

    let mut report = GradCheckReport { max_rel_err: 0.0, coords_checked: 0, worst: None };
    for (ni, ci) in coords {
        let name = &names[ni];
        let orig = store.get(name).at(ci);
        let h = S::of(eps);

        store.get_mut(name).as_mut_slice()[ci] = orig + h;
        let up = loss_fn(store).as_f64();
        store.get_mut(name).as_mut_slice()[ci] = orig - h;
        let down = loss_fn(store).as_f64();
        store.get_mut(name).as_mut_slice()[ci] = orig;

        if !up.is_finite() || !down.is_finite() {
            return Err(NnError::NonFinite(format!("grad_check perturbation of {name}[{ci}]")));
        }
        let fd = (up - down) / (2.0 * eps);
        let bp = store
            .entry(name)
            .grad
            .as_ref()
            .map(|g| g.at(ci).as_f64())
            .unwrap_or(0.0);
        let rel = rel_err(fd, bp);
        report.coords_checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((name.clone(), ci));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::rng::stream;
    use crate::NumArray;

    #[test]
    fn constant_function_has_zero_gradient_both_ways() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", NumArray::vector(vec![1.0, 2.0]), true);
        store.zero_grads();
        let mut rng = stream(0, "gc", &[]);
        let report = grad_check(&mut store, |_| 42.0, 1e-5, 1000, &mut rng).unwrap();
        assert_eq!(report.max_rel_err, 0.0);
        assert_eq!(report.coords_checked, 2);
    }

    #[test]
    fn quadratic_gradient_matches() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", NumArray::vector(vec![0.7, -1.3, 2.2]), true);

        let loss = |ps: &ParamStore<f64>| {
            let mut g = Graph::new();
            let w = g.param(ps, "w");
            let sq = g.mul(w, w);
            let l = g.sum_all(sq);
            g.scalar_value(l)
        };

        store.zero_grads();
        let mut g = Graph::new();
        let w = g.param(&store, "w");
        let sq = g.mul(w, w);
        let l = g.sum_all(sq);
        g.backward(l);
        g.grads_into(&mut store).unwrap();

        let mut rng = stream(1, "gc", &[]);
        let report = grad_check(&mut store, loss, 1e-5, 1000, &mut rng).unwrap();
        assert!(report.max_rel_err < 1e-9, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", NumArray::vector(vec![1.0]), true);
        store.zero_grads();
        let mut rng = stream(2, "gc", &[]);
        let err = grad_check(&mut store, |_| f64::NAN, 1e-5, 100, &mut rng);
        assert!(err.is_err());
    }
}
