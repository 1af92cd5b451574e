//! Flat-binary baseline: an MLP over the registered binary state vector
//! feeding the GRU action decoder. New domains require new input weights,
//! so the parameter count grows with the ontology.

use std::sync::Arc;

use dialogue_env::{DialogueState, Ontology};
use nn_core::graph::{Graph, NodeId};
use nn_core::{Dense, NumArray, ParamStore, Scalar};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use state_features::{flatten_binary, LayoutRegistry};

use crate::actions::ActionVocab;
use crate::agent::{ActionRecord, Agent, ArchKind, DecodeMode, ModelConfig, PolicyScore};
use crate::baseline::{GruActionDecoder, MlpEncoder};
use crate::PolicyError;

pub struct BinPolicy<S: Scalar> {
    ontology: Arc<Ontology>,
    vocab: ActionVocab,
    registry: LayoutRegistry,
    cfg: ModelConfig,
    policy: ParamStore<S>,
    critic: ParamStore<S>,
    mlp: MlpEncoder,
    dec: GruActionDecoder,
    c_mlp: MlpEncoder,
    c_head: Dense,
}

impl<S: Scalar> BinPolicy<S> {
    pub fn new(
        ontology: Arc<Ontology>,
        cfg: ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        let vocab = ActionVocab::for_ontology(&ontology)?;
        let registry = LayoutRegistry::for_ontology(&ontology);
        Self::from_parts(ontology, cfg, vocab, registry, rng)
    }

    pub fn from_parts(
        ontology: Arc<Ontology>,
        cfg: ModelConfig,
        vocab: ActionVocab,
        registry: LayoutRegistry,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        let width = registry.width();
        let h = cfg.hidden;
        let mut me = Self {
            mlp: MlpEncoder::new("mlp", width, h, cfg.mlp_layers, h),
            dec: GruActionDecoder::new(&cfg),
            c_mlp: MlpEncoder::new("mlp", width, h, cfg.mlp_layers, h),
            c_head: Dense::new("head", h, 1),
            ontology,
            vocab,
            registry,
            cfg,
            policy: ParamStore::new(),
            critic: ParamStore::new(),
        };
        me.init_stores(rng);
        Ok(me)
    }

    fn init_stores(&mut self, rng: &mut ChaCha8Rng) {
        let mut policy = ParamStore::new();
        self.mlp.init(&mut policy, rng);
        self.dec.init(&mut policy, &self.vocab, rng);
        let mut critic = ParamStore::new();
        self.c_mlp.init(&mut critic, rng);
        self.c_head.init(&mut critic, rng);
        self.policy = policy;
        self.critic = critic;
    }

    fn input_node(&self, g: &mut Graph<S>, state: &DialogueState) -> Result<NodeId, PolicyError> {
        let v = flatten_binary(state, &self.registry)?;
        Ok(g.input(NumArray::vector(v.into_iter().map(S::of).collect())))
    }

    /// MLP forward over the binary vector; errors when the state holds
    /// features outside the registry (extend it first).
    pub fn encode(&self, g: &mut Graph<S>, state: &DialogueState) -> Result<NodeId, PolicyError> {
        let x = self.input_node(g, state)?;
        Ok(self.mlp.forward(g, &self.policy, x))
    }

    pub fn registry(&self) -> &LayoutRegistry {
        &self.registry
    }
}

impl<S: Scalar> Agent<S> for BinPolicy<S> {
    fn kind(&self) -> ArchKind {
        ArchKind::Bin
    }

    fn vocab(&self) -> &ActionVocab {
        &self.vocab
    }

    fn ontology(&self) -> &Arc<Ontology> {
        &self.ontology
    }

    fn model_config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn decide(
        &self,
        state: &DialogueState,
        mode: DecodeMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<ActionRecord, PolicyError> {
        let mut g = Graph::new();
        let enc = self.encode(&mut g, state)?;
        self.dec.decide(
            &mut g,
            &self.policy,
            &self.vocab,
            &self.ontology,
            state,
            enc,
            self.cfg.max_action_tuples,
            mode,
            rng,
        )
    }

    fn behavior_value(&self, state: &DialogueState) -> f64 {
        let mut g = Graph::new();
        let v = self.critic_value(&mut g, state);
        g.scalar_value(v).as_f64()
    }

    fn score(
        &self,
        g: &mut Graph<S>,
        state: &DialogueState,
        record: &ActionRecord,
    ) -> Result<PolicyScore, PolicyError> {
        let enc = self.encode(g, state)?;
        self.dec
            .score(g, &self.policy, &self.vocab, &self.ontology, state, enc, record)
    }

    fn critic_value(&self, g: &mut Graph<S>, state: &DialogueState) -> NodeId {
        let x = self
            .input_node(g, state)
            .expect("critic state must be registered");
        let h = self.c_mlp.forward(g, &self.critic, x);
        self.c_head.forward(g, &self.critic, h)
    }

    fn policy_store(&self) -> &ParamStore<S> {
        &self.policy
    }

    fn policy_store_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.policy
    }

    fn critic_store(&self) -> &ParamStore<S> {
        &self.critic
    }

    fn critic_store_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.critic
    }

    /// Registers the domain's features and appends zero-initialized input
    /// rows, keeping all existing weights bit-identical. The parameter count
    /// strictly increases.
    fn register_domain(
        &mut self,
        ontology: Arc<Ontology>,
        domain: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), PolicyError> {
        self.ontology = ontology;
        let schema = self.ontology.domain(domain)?;
        self.registry.extend_for_domain(schema)?;
        self.vocab.register_domain(&self.ontology, domain)?;
        let width = self.registry.width();
        self.mlp.grow_input(&mut self.policy, width);
        self.c_mlp.grow_input(&mut self.critic, width);
        self.dec.grow(&mut self.policy, &self.vocab, rng);
        Ok(())
    }

    fn reinit(&mut self, rng: &mut ChaCha8Rng) {
        self.init_stores(rng);
    }

    fn meta_json(&self) -> serde_json::Value {
        json!({
            "arch": "bin",
            "model": self.cfg,
            "vocab": self.vocab,
            "registry": self.registry,
            "ontology": self.ontology.as_ref(),
        })
    }
}
