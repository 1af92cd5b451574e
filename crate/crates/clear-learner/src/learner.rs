//! The continual learner: mixed online/offline actor-critic updates with
//! behavioral-cloning regularization of the offline fraction.
//!
//! Every update draws the most recent episodes (online fraction, for
//! plasticity) plus a uniform reservoir sample (offline fraction, against
//! forgetting). Both fractions contribute the actor and critic losses; the
//! offline fraction additionally pulls the critic toward its recorded
//! replay predictions and the policy toward the recorded behavior
//! distributions; the entropy bonus applies to the online fraction.

use std::collections::VecDeque;

use nn_core::adam::{adam_step, AdamState};
use nn_core::checkpoint::Record;
use nn_core::graph::Graph;
use nn_core::rng::stream;
use nn_core::Scalar;
use policies::Agent;
use serde::{Deserialize, Serialize};

use crate::buffer::{Episode, ReplayBuffer};
use crate::vtrace::{advantages, vtrace_targets, VtraceConfig};
use crate::LearnerError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClearConfig {
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
    /// Fraction of each batch taken from the most recent episodes.
    pub online_ratio: f64,
    pub batch_episodes: usize,
    /// Dialogues between updates.
    pub update_every: usize,
    pub buffer_capacity: usize,
    pub value_reg_weight: f64,
    pub policy_reg_weight: f64,
    pub entropy_weight: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub grad_clip: f64,
}

impl Default for ClearConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            rho_bar: 1.0,
            c_bar: 1.0,
            online_ratio: 0.2,
            batch_episodes: 64,
            update_every: 2,
            buffer_capacity: 5000,
            value_reg_weight: 0.1,
            policy_reg_weight: 0.1,
            entropy_weight: 0.01,
            policy_lr: 5e-5,
            critic_lr: 1e-4,
            grad_clip: 5.0,
        }
    }
}

impl ClearConfig {
    pub fn vtrace(&self) -> VtraceConfig {
        VtraceConfig { gamma: self.gamma, rho_bar: self.rho_bar, c_bar: self.c_bar }
    }

    pub fn online_count(&self) -> usize {
        ((self.online_ratio * self.batch_episodes as f64).ceil() as usize)
            .min(self.batch_episodes)
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(0.0..=1.0).contains(&self.online_ratio) {
            return Err(LearnerError::Config("online_ratio must be in [0, 1]".into()));
        }
        self.vtrace().validate()
    }
}

/// Scalar loss report of one update, emitted as a structured log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update_index: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub value_reg: f64,
    pub policy_reg: f64,
    pub online_episodes: usize,
    pub offline_episodes: usize,
    pub transitions: usize,
    pub buffer_size: usize,
    pub clamp_events: u64,
    pub policy_grad_norm: f64,
    pub critic_grad_norm: f64,
}

/// Per-episode loss sums (nodes live on the two per-episode graphs).
struct EpisodeTerms {
    critic_sq: nn_core::NodeId,
    vreg_sq: Option<nn_core::NodeId>,
    actor: nn_core::NodeId,
    entropy: nn_core::NodeId,
    pireg: Option<nn_core::NodeId>,
}

pub struct ClearLearner<S: Scalar> {
    pub cfg: ClearConfig,
    pub buffer: ReplayBuffer,
    recent: VecDeque<Episode>,
    policy_opt: AdamState<S>,
    critic_opt: AdamState<S>,
    pending: usize,
    pub updates: u64,
    pub clamp_events: u64,
    seed: u64,
}

impl<S: Scalar> ClearLearner<S> {
    pub fn new(cfg: ClearConfig, seed: u64) -> Result<Self, LearnerError> {
        cfg.validate()?;
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.buffer_capacity, seed),
            recent: VecDeque::new(),
            policy_opt: AdamState::new(cfg.policy_lr),
            critic_opt: AdamState::new(cfg.critic_lr),
            pending: 0,
            updates: 0,
            clamp_events: 0,
            seed,
            cfg,
        })
    }

    /// Stores a finished dialogue; runs an update once enough new dialogues
    /// accumulated.
    pub fn observe(
        &mut self,
        episode: Episode,
        agent: &mut dyn Agent<S>,
    ) -> Result<Option<UpdateMetrics>, LearnerError> {
        self.recent.push_front(episode.clone());
        self.recent.truncate(self.cfg.batch_episodes.max(1));
        self.buffer.insert(episode);
        self.pending += 1;
        if self.pending >= self.cfg.update_every {
            self.pending = 0;
            return Ok(Some(self.update(agent)?));
        }
        Ok(None)
    }

    /// One mixed online/offline update: 13 + 51 episodes at the default
    /// batch of 64 with online ratio 0.2 (online count is the ceiling).
    /// With an empty buffer the update is online-only.
    pub fn update(&mut self, agent: &mut dyn Agent<S>) -> Result<UpdateMetrics, LearnerError> {
        let n_online = self.cfg.online_count().min(self.recent.len()).max(1.min(self.recent.len()));
        let online: Vec<Episode> = self.recent.iter().take(n_online).cloned().collect();
        let n_offline = self.cfg.batch_episodes.saturating_sub(online.len());
        let mut off_rng = stream(self.seed, "offline-sample", &[self.updates]);
        let offline: Vec<Episode> =
            self.buffer.sample(n_offline, &mut off_rng).into_iter().cloned().collect();

        let n_all: usize = online.iter().chain(&offline).map(Episode::len).sum();
        let n_on: usize = online.iter().map(Episode::len).sum();
        let n_off: usize = offline.iter().map(Episode::len).sum();
        if n_all == 0 {
            return Err(LearnerError::Config("update on an empty batch".into()));
        }

        agent.policy_store_mut().zero_grads();
        agent.critic_store_mut().zero_grads();

        let mut sums = [0.0f64; 5]; // actor, critic, entropy, vreg, pireg
        let mut clamp_events = 0u64;

        let w_all = 1.0 / n_all as f64;
        let w_on = if n_on > 0 { 1.0 / n_on as f64 } else { 0.0 };
        let w_off = if n_off > 0 { 1.0 / n_off as f64 } else { 0.0 };

        for (ep, offline_ep) in online
            .iter()
            .map(|e| (e, false))
            .chain(offline.iter().map(|e| (e, true)))
        {
            let mut gc = Graph::new();
            let mut gp = Graph::new();
            let terms = self.episode_terms(agent, ep, offline_ep, &mut gc, &mut gp)?;

            // critic objective: mean squared target error + offline value regularizer
            let mut critic_total = gc.scale(terms.critic_sq, w_all);
            sums[1] += gc.scalar_value(terms.critic_sq).as_f64() * w_all;
            if let Some(vreg) = terms.vreg_sq {
                let scaled = gc.scale(vreg, self.cfg.value_reg_weight * w_off);
                critic_total = gc.add(critic_total, scaled);
                sums[3] += gc.scalar_value(vreg).as_f64() * w_off;
            }
            gc.backward(critic_total);
            gc.grads_into(agent.critic_store_mut())?;

            // policy objective: actor + offline KL regularizer - entropy bonus
            let mut policy_total = gp.scale(terms.actor, w_all);
            sums[0] += gp.scalar_value(terms.actor).as_f64() * w_all;
            if offline_ep {
                if let Some(pireg) = terms.pireg {
                    let scaled = gp.scale(pireg, self.cfg.policy_reg_weight * w_off);
                    policy_total = gp.add(policy_total, scaled);
                    sums[4] += gp.scalar_value(pireg).as_f64() * w_off;
                }
            } else {
                // entropy loss is -mean(H) over the online fraction
                let scaled = gp.scale(terms.entropy, -self.cfg.entropy_weight * w_on);
                policy_total = gp.add(policy_total, scaled);
                sums[2] += gp.scalar_value(terms.entropy).as_f64() * w_on;
            }
            gp.backward(policy_total);
            gp.grads_into(agent.policy_store_mut())?;
            clamp_events += gp.clamp_events;
        }

        let policy_grad_norm = agent.policy_store_mut().clip_global_norm(self.cfg.grad_clip);
        let critic_grad_norm = agent.critic_store_mut().clip_global_norm(self.cfg.grad_clip);
        adam_step(agent.policy_store_mut(), &mut self.policy_opt)?;
        adam_step(agent.critic_store_mut(), &mut self.critic_opt)?;

        self.updates += 1;
        self.clamp_events += clamp_events;
        Ok(UpdateMetrics {
            update_index: self.updates,
            actor_loss: sums[0],
            critic_loss: sums[1],
            entropy: sums[2],
            value_reg: sums[3],
            policy_reg: sums[4],
            online_episodes: online.len(),
            offline_episodes: offline.len(),
            transitions: n_all,
            buffer_size: self.buffer.len(),
            clamp_events,
            policy_grad_norm,
            critic_grad_norm,
        })
    }

    /// Builds the loss sums of one episode on the given critic and policy
    /// graphs. Value targets, advantages and importance ratios are computed
    /// from node values and folded in as constants.
    fn episode_terms(
        &self,
        agent: &dyn Agent<S>,
        ep: &Episode,
        offline: bool,
        gc: &mut Graph<S>,
        gp: &mut Graph<S>,
    ) -> Result<EpisodeTerms, LearnerError> {
        let n = ep.len();
        let v_nodes: Vec<nn_core::NodeId> =
            ep.transitions.iter().map(|t| agent.critic_value(gc, &t.state)).collect();
        let values: Vec<f64> = v_nodes.iter().map(|&v| gc.scalar_value(v).as_f64()).collect();

        let mut scores = Vec::with_capacity(n);
        for t in &ep.transitions {
            scores.push(agent.score(gp, &t.state, &t.action)?);
        }
        let rewards: Vec<f64> = ep.transitions.iter().map(|t| t.reward).collect();
        let mut ratios = Vec::with_capacity(n);
        for (s, t) in scores.iter().zip(&ep.transitions) {
            let r = (s.log_prob_value - t.action.log_prob).exp();
            if !r.is_finite() {
                return Err(LearnerError::NonFiniteRatio { index: ratios.len(), ratio: r });
            }
            ratios.push(r);
        }
        // full-episode segments bootstrap with 0 at the terminal state
        let targets = vtrace_targets(&rewards, &values, 0.0, &ratios, &self.cfg.vtrace())?;
        let advs = advantages(&rewards, &values, &targets, 0.0, self.cfg.gamma);

        // critic: sum_k (v_k - V(s_k))^2
        let mut critic_sq_terms = Vec::with_capacity(n);
        for (k, &vn) in v_nodes.iter().enumerate() {
            let target = gc.input_scalar(S::of(targets[k]));
            let diff = gc.sub(target, vn);
            critic_sq_terms.push(gc.mul(diff, diff));
        }
        let critic_sq = gc.add_n(&critic_sq_terms);

        let vreg_sq = if offline {
            let mut terms = Vec::with_capacity(n);
            for (t, &vn) in ep.transitions.iter().zip(&v_nodes) {
                let replay = gc.input_scalar(S::of(t.value));
                let diff = gc.sub(vn, replay);
                terms.push(gc.mul(diff, diff));
            }
            Some(gc.add_n(&terms))
        } else {
            None
        };

        // actor: sum_k -(truncated ratio) * A_k * log pi; the coefficient is
        // a constant (no gradient through the ratio or the advantage)
        let mut actor_terms = Vec::with_capacity(n);
        let mut entropy_terms = Vec::with_capacity(n);
        for (k, s) in scores.iter().enumerate() {
            let coeff = -ratios[k].min(self.cfg.rho_bar) * advs[k];
            actor_terms.push(gp.scale(s.log_prob, coeff));
            entropy_terms.push(s.entropy);
        }
        let actor = gp.add_n(&actor_terms);
        let entropy = gp.add_n(&entropy_terms);

        let pireg = if offline {
            let mut terms = Vec::new();
            for (s, t) in scores.iter().zip(&ep.transitions) {
                for (dist_node, step) in s.step_dists.iter().zip(&t.action.steps) {
                    let len = gp.value(*dist_node).len();
                    if step.probs.len() > len {
                        return Err(LearnerError::Config(format!(
                            "stored distribution wider than the current vocabulary ({} > {len})",
                            step.probs.len()
                        )));
                    }
                    let mut mu = step.probs.clone();
                    mu.resize(len, 0.0);
                    terms.push(gp.kl_from_stored(*dist_node, &mu));
                }
            }
            Some(gp.add_n(&terms))
        } else {
            None
        };

        Ok(EpisodeTerms { critic_sq, vreg_sq, actor, entropy, pireg })
    }

    pub fn pending_dialogues(&self) -> usize {
        self.pending
    }

    pub fn recent_episodes(&self) -> impl Iterator<Item = &Episode> {
        self.recent.iter()
    }

    /// Serializable learner state (episodes and counters) for resumption.
    pub fn snapshot(&self) -> LearnerSnapshot {
        LearnerSnapshot {
            buffer_episodes: self.buffer.episodes().to_vec(),
            buffer_seen: self.buffer.total_seen(),
            recent: self.recent.iter().cloned().collect(),
            pending: self.pending,
            updates: self.updates,
            clamp_events: self.clamp_events,
        }
    }

    pub fn restore(
        cfg: ClearConfig,
        seed: u64,
        snap: LearnerSnapshot,
        policy_opt: AdamState<S>,
        critic_opt: AdamState<S>,
    ) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let buffer =
            ReplayBuffer::restore(cfg.buffer_capacity, seed, snap.buffer_episodes, snap.buffer_seen);
        Ok(Self {
            buffer,
            recent: snap.recent.into(),
            policy_opt,
            critic_opt,
            pending: snap.pending,
            updates: snap.updates,
            clamp_events: snap.clamp_events,
            seed,
            cfg,
        })
    }

    /// Optimizer moments as checkpoint records (`opt/<which>/<m|v>/<param>`).
    pub fn optimizer_records(&self, agent: &dyn Agent<S>) -> Vec<Record> {
        let mut records = Vec::new();
        let meta = serde_json::json!({
            "policy_step": self.policy_opt.step,
            "critic_step": self.critic_opt.step,
        });
        records.push(Record::bytes("__opt__", serde_json::to_vec(&meta).unwrap()));
        for (which, opt, store) in [
            ("policy", &self.policy_opt, agent.policy_store()),
            ("critic", &self.critic_opt, agent.critic_store()),
        ] {
            for e in store.iter() {
                if let Some((m, v)) = opt.moments(&e.name) {
                    records.push(Record::from_array(&format!("opt/{which}/m/{}", e.name), m));
                    records.push(Record::from_array(&format!("opt/{which}/v/{}", e.name), v));
                }
            }
        }
        records
    }

    /// Restores optimizer moments saved by [`Self::optimizer_records`].
    pub fn load_optimizer_records(&mut self, records: &[Record]) -> Result<(), LearnerError> {
        for r in records {
            if r.name == "__opt__" {
                if let nn_core::checkpoint::RecordPayload::Bytes(b) = &r.payload {
                    let meta: serde_json::Value = serde_json::from_slice(b)
                        .map_err(|e| LearnerError::Config(format!("bad optimizer meta: {e}")))?;
                    self.policy_opt.step =
                        meta.get("policy_step").and_then(|v| v.as_u64()).unwrap_or(0);
                    self.critic_opt.step =
                        meta.get("critic_step").and_then(|v| v.as_u64()).unwrap_or(0);
                }
                continue;
            }
            let Some(rest) = r.name.strip_prefix("opt/") else { continue };
            let (which, rest) = rest.split_once('/').unwrap_or(("", ""));
            let (kind, param) = rest.split_once('/').unwrap_or(("", ""));
            let opt = match which {
                "policy" => &mut self.policy_opt,
                "critic" => &mut self.critic_opt,
                _ => continue,
            };
            let arr = r.to_array::<S>()?;
            match kind {
                "m" => {
                    let v = opt
                        .moments(param)
                        .map(|(_, v)| v.clone())
                        .unwrap_or_else(|| nn_core::NumArray::zeros(arr.shape()));
                    opt.set_moments(param, arr, v);
                }
                "v" => {
                    let m = opt
                        .moments(param)
                        .map(|(m, _)| m.clone())
                        .unwrap_or_else(|| nn_core::NumArray::zeros(arr.shape()));
                    opt.set_moments(param, m, arr);
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSnapshot {
    pub buffer_episodes: Vec<Episode>,
    pub buffer_seen: u64,
    pub recent: Vec<Episode>,
    pub pending: usize,
    pub updates: u64,
    pub clamp_events: u64,
}
