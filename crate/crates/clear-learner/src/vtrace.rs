//! Truncated importance-sampling value targets.
//!
//! For a trajectory under behavior policy mu with current-policy ratios
//! `pi/mu`, the n-step target for V(s_k) is
//!
//! ```text
//! v_k = V(s_k) + sum_{t=k}^{k+n-1} gamma^{t-k} (prod_{i=k}^{t-1} c_i) delta_t
//! delta_t = rho_t (r_t + gamma V(s_{t+1}) - V(s_t))
//! rho_t = min(rho_bar, pi/mu),  c_i = min(c_bar, pi/mu)
//! ```
//!
//! The implementation uses the suffix recursion; [`vtrace_targets_direct`]
//! is the independent double-summation oracle it is tested against.

use serde::{Deserialize, Serialize};

use crate::LearnerError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VtraceConfig {
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
}

impl Default for VtraceConfig {
    fn default() -> Self {
        Self { gamma: 0.99, rho_bar: 1.0, c_bar: 1.0 }
    }
}

impl VtraceConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.rho_bar < self.c_bar {
            return Err(LearnerError::Config(format!(
                "rho_bar ({}) must be >= c_bar ({})",
                self.rho_bar, self.c_bar
            )));
        }
        Ok(())
    }
}

fn check_inputs(
    rewards: &[f64],
    values: &[f64],
    ratios: &[f64],
) -> Result<(), LearnerError> {
    if rewards.is_empty() || rewards.len() != values.len() || rewards.len() != ratios.len() {
        return Err(LearnerError::Config(format!(
            "segment lengths differ: {} rewards, {} values, {} ratios",
            rewards.len(),
            values.len(),
            ratios.len()
        )));
    }
    for (i, r) in ratios.iter().enumerate() {
        if !r.is_finite() || *r < 0.0 {
            return Err(LearnerError::NonFiniteRatio { index: i, ratio: *r });
        }
    }
    Ok(())
}

/// Suffix-recursive targets for every position of the segment. `bootstrap`
/// is V of the state after the segment (0 for terminal segments).
pub fn vtrace_targets(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    ratios: &[f64],
    cfg: &VtraceConfig,
) -> Result<Vec<f64>, LearnerError> {
    cfg.validate()?;
    check_inputs(rewards, values, ratios)?;
    let n = rewards.len();
    let mut v = vec![0.0; n];
    for k in (0..n).rev() {
        let next_value = if k + 1 < n { values[k + 1] } else { bootstrap };
        let next_target = if k + 1 < n { v[k + 1] } else { bootstrap };
        let rho = ratios[k].min(cfg.rho_bar);
        let c = ratios[k].min(cfg.c_bar);
        let delta = rho * (rewards[k] + cfg.gamma * next_value - values[k]);
        v[k] = values[k] + delta + cfg.gamma * c * (next_target - next_value);
    }
    Ok(v)
}

/// Direct double-summation form of the same targets; the test oracle.
pub fn vtrace_targets_direct(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    ratios: &[f64],
    cfg: &VtraceConfig,
) -> Result<Vec<f64>, LearnerError> {
    cfg.validate()?;
    check_inputs(rewards, values, ratios)?;
    let n = rewards.len();
    let value_at = |i: usize| if i < n { values[i] } else { bootstrap };
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut acc = values[k];
        for t in k..n {
            let rho = ratios[t].min(cfg.rho_bar);
            let delta = rho * (rewards[t] + cfg.gamma * value_at(t + 1) - values[t]);
            let mut coeff = cfg.gamma.powi((t - k) as i32);
            for i in k..t {
                coeff *= ratios[i].min(cfg.c_bar);
            }
            acc += coeff * delta;
        }
        out[k] = acc;
    }
    Ok(out)
}

/// Advantage estimates `A_k = r_k + gamma v_{k+1} - V(s_k)` from targets.
pub fn advantages(
    rewards: &[f64],
    values: &[f64],
    targets: &[f64],
    bootstrap: f64,
    gamma: f64,
) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|k| {
            let next = if k + 1 < n { targets[k + 1] } else { bootstrap };
            rewards[k] + gamma * next - values[k]
        })
        .collect()
}
