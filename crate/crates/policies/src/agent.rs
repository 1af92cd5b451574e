//! The architecture-independent policy interface driven by the learner and
//! the experiment harness.

use std::sync::Arc;

use dialogue_env::{DialogueState, Ontology};
use nn_core::graph::{Graph, NodeId};
use nn_core::{ParamStore, Scalar};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{ActionTuple, ActionVocab};
use crate::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Bin,
    Sem,
    Ddpt,
}

impl ArchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchKind::Bin => "bin",
            ArchKind::Sem => "sem",
            ArchKind::Ddpt => "ddpt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bin" => Some(ArchKind::Bin),
            "sem" => Some(ArchKind::Sem),
            "ddpt" => Some(ArchKind::Ddpt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Sample every step.
    Train,
    /// Argmax the domain, sample intent and slot.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Domain,
    Intent,
    Slot,
}

impl StepKind {
    pub fn index(self) -> usize {
        match self {
            StepKind::Domain => 0,
            StepKind::Intent => 1,
            StepKind::Slot => 2,
        }
    }
}

/// One decode step as recorded at rollout time: the full per-symbol
/// distribution (masked symbols hold exactly 0) and the chosen index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: StepKind,
    pub chosen: usize,
    pub probs: Vec<f64>,
}

/// A decoded action sequence plus everything the replay buffer must freeze:
/// total behavior log-prob and per-step behavior distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionRecord {
    pub tuples: Vec<ActionTuple>,
    /// True when the stop domain ended the sequence (vs the length cap).
    pub stopped: bool,
    pub log_prob: f64,
    pub steps: Vec<StepRecord>,
}

/// Differentiable scoring of a stored action sequence under the current
/// policy parameters.
pub struct PolicyScore {
    /// Total log-probability, shape `[1]`.
    pub log_prob: NodeId,
    /// Summed per-step categorical entropies, shape `[1]`.
    pub entropy: NodeId,
    /// Current per-step distributions, aligned with the record's steps.
    pub step_dists: Vec<NodeId>,
    pub log_prob_value: f64,
}

/// Architecture dimensions; defaults follow the reference configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub desc_dim: usize,
    pub value_embed_dim: usize,
    pub token_embed_dim: usize,
    pub sem_embed_dim: usize,
    pub gru_layers: usize,
    pub mlp_layers: usize,
    pub max_action_tuples: usize,
    pub domain_gate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            encoder_layers: 4,
            decoder_layers: 2,
            heads: 2,
            desc_dim: 64,
            value_embed_dim: 16,
            token_embed_dim: 64,
            sem_embed_dim: 32,
            gru_layers: 2,
            mlp_layers: 3,
            max_action_tuples: 5,
            domain_gate: true,
        }
    }
}

impl ModelConfig {
    pub fn ff_hidden(&self) -> usize {
        2 * self.hidden
    }
}

/// A policy+critic pair of one architecture.
pub trait Agent<S: Scalar> {
    fn kind(&self) -> ArchKind;
    fn vocab(&self) -> &ActionVocab;
    fn ontology(&self) -> &Arc<Ontology>;
    fn model_config(&self) -> &ModelConfig;

    /// Rolls out one action sequence for the state.
    fn decide(
        &self,
        state: &DialogueState,
        mode: DecodeMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<ActionRecord, PolicyError>;

    /// Critic prediction at rollout time (recorded as the replay value).
    fn behavior_value(&self, state: &DialogueState) -> f64;

    /// Teacher-forced differentiable re-scoring of a stored sequence.
    fn score(
        &self,
        g: &mut Graph<S>,
        state: &DialogueState,
        record: &ActionRecord,
    ) -> Result<PolicyScore, PolicyError>;

    /// Differentiable critic value, shape `[1]`.
    fn critic_value(&self, g: &mut Graph<S>, state: &DialogueState) -> NodeId;

    fn policy_store(&self) -> &ParamStore<S>;
    fn policy_store_mut(&mut self) -> &mut ParamStore<S>;
    fn critic_store(&self) -> &ParamStore<S>;
    fn critic_store_mut(&mut self) -> &mut ParamStore<S>;

    /// Makes a new ontology domain decodable and encodable. The rng seeds
    /// whatever fresh parameters the architecture needs (the transformer
    /// policy needs none).
    fn register_domain(
        &mut self,
        ontology: Arc<Ontology>,
        domain: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), PolicyError>;

    /// Re-randomizes every trainable parameter (used by the random
    /// reference model); shapes and vocabularies are preserved.
    fn reinit(&mut self, rng: &mut ChaCha8Rng);

    /// Trainable scalars across policy and critic.
    fn trainable_param_count(&self) -> usize {
        self.policy_store().trainable_param_count() + self.critic_store().trainable_param_count()
    }

    /// Architecture-specific state for self-describing checkpoints.
    fn meta_json(&self) -> serde_json::Value;
}
