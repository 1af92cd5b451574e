//! The domain -> intent -> slot decode loop bookkeeping shared by all
//! architectures: sampling/argmax, teacher forcing, step records, log-prob
//! and entropy accumulation.

use nn_core::graph::{Graph, NodeId};
use nn_core::Scalar;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{ActionRecord, DecodeMode, PolicyScore, StepKind, StepRecord};
use crate::PolicyError;

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_valid = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_valid = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_valid // rounding residue lands on the last supported symbol
}

pub(crate) fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for (i, &p) in probs.iter().enumerate() {
        if p > best_p {
            best_p = p;
            best = i;
        }
    }
    best
}

/// Tracks one pass through the decode loop, either sampling fresh choices or
/// teacher-forcing a stored record.
pub(crate) struct DecodeDriver<'a> {
    forced: Option<&'a ActionRecord>,
    mode: DecodeMode,
    step_idx: usize,
    /// Whether to build log-prob/entropy nodes for gradients.
    want_nodes: bool,
    pub records: Vec<StepRecord>,
    log_prob_nodes: Vec<NodeId>,
    entropy_nodes: Vec<NodeId>,
    dist_nodes: Vec<NodeId>,
    pub log_prob_value: f64,
}

impl<'a> DecodeDriver<'a> {
    pub fn sampling(mode: DecodeMode) -> Self {
        Self {
            forced: None,
            mode,
            step_idx: 0,
            want_nodes: false,
            records: Vec::new(),
            log_prob_nodes: Vec::new(),
            entropy_nodes: Vec::new(),
            dist_nodes: Vec::new(),
            log_prob_value: 0.0,
        }
    }

    pub fn scoring(record: &'a ActionRecord) -> Self {
        Self {
            forced: Some(record),
            mode: DecodeMode::Train,
            step_idx: 0,
            want_nodes: true,
            records: Vec::new(),
            log_prob_nodes: Vec::new(),
            entropy_nodes: Vec::new(),
            dist_nodes: Vec::new(),
            log_prob_value: 0.0,
        }
    }

    /// Picks a symbol from the distribution node, records the step and
    /// accumulates log-probs. `mask` marks the legal support (used for the
    /// entropy node).
    pub fn choose<S: Scalar>(
        &mut self,
        g: &mut Graph<S>,
        kind: StepKind,
        dist: NodeId,
        mask: &[bool],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<usize, PolicyError> {
        let probs: Vec<f64> = g.value(dist).as_slice().iter().map(|v| v.as_f64()).collect();
        let chosen = match self.forced {
            Some(rec) => {
                let step = rec.steps.get(self.step_idx).ok_or_else(|| {
                    PolicyError::CorruptRecord(format!(
                        "record ran out of steps at index {}",
                        self.step_idx
                    ))
                })?;
                if step.kind != kind {
                    return Err(PolicyError::CorruptRecord(format!(
                        "step {} kind mismatch: stored {:?}, decoding {:?}",
                        self.step_idx, step.kind, kind
                    )));
                }
                if probs.get(step.chosen).copied().unwrap_or(0.0) <= 0.0 {
                    return Err(PolicyError::ZeroProbSymbol {
                        step: self.step_idx,
                        symbol: step.chosen,
                    });
                }
                step.chosen
            }
            None => {
                let rng = rng.expect("sampling mode needs an rng");
                match (self.mode, kind) {
                    (DecodeMode::Eval, StepKind::Domain) => argmax(&probs),
                    _ => sample_categorical(&probs, rng),
                }
            }
        };
        self.log_prob_value += probs[chosen].max(f64::MIN_POSITIVE).ln();
        self.records.push(StepRecord { kind, chosen, probs });
        if self.want_nodes {
            let p = g.gather(dist, chosen);
            self.log_prob_nodes.push(g.ln(p));
            self.entropy_nodes.push(g.masked_entropy(dist, mask));
            self.dist_nodes.push(dist);
        }
        self.step_idx += 1;
        Ok(chosen)
    }

    pub fn into_record(self, tuples: Vec<crate::actions::ActionTuple>, stopped: bool) -> ActionRecord {
        ActionRecord { tuples, stopped, log_prob: self.log_prob_value, steps: self.records }
    }

    pub fn into_score<S: Scalar>(self, g: &mut Graph<S>) -> PolicyScore {
        let log_prob = g.add_n(&self.log_prob_nodes);
        let entropy = g.add_n(&self.entropy_nodes);
        PolicyScore {
            log_prob,
            entropy,
            step_dists: self.dist_nodes,
            log_prob_value: self.log_prob_value,
        }
    }
}
