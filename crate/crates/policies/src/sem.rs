//! Semantic-feature baseline: domain-averaged trainable embeddings feed the
//! same MLP encoder and GRU action decoder as the flat-binary baseline. The
//! encoder input width is fixed regardless of the domain count; growth adds
//! only new symbol embeddings.

use std::sync::Arc;

use dialogue_env::{DialogueState, Ontology};
use nn_core::graph::{Graph, NodeId};
use nn_core::{Dense, ParamStore, Scalar};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use state_features::{SemEmbeddings, SemVocab};

use crate::actions::ActionVocab;
use crate::agent::{ActionRecord, Agent, ArchKind, DecodeMode, ModelConfig, PolicyScore};
use crate::baseline::{GruActionDecoder, MlpEncoder};
use crate::PolicyError;

pub struct SemPolicy<S: Scalar> {
    ontology: Arc<Ontology>,
    vocab: ActionVocab,
    sem_vocab: SemVocab,
    cfg: ModelConfig,
    policy: ParamStore<S>,
    critic: ParamStore<S>,
    sem: SemEmbeddings,
    mlp: MlpEncoder,
    dec: GruActionDecoder,
    c_sem: SemEmbeddings,
    c_mlp: MlpEncoder,
    c_head: Dense,
}

impl<S: Scalar> SemPolicy<S> {
    pub fn new(
        ontology: Arc<Ontology>,
        cfg: ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        let vocab = ActionVocab::for_ontology(&ontology)?;
        let sem_vocab = SemVocab::for_ontology(&ontology);
        Self::from_parts(ontology, cfg, vocab, sem_vocab, rng)
    }

    pub fn from_parts(
        ontology: Arc<Ontology>,
        cfg: ModelConfig,
        vocab: ActionVocab,
        sem_vocab: SemVocab,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        let sem = SemEmbeddings::new("sem", cfg.sem_embed_dim);
        let c_sem = SemEmbeddings::new("sem", cfg.sem_embed_dim);
        let h = cfg.hidden;
        let input = sem.output_dim();
        let mut me = Self {
            mlp: MlpEncoder::new("mlp", input, h, cfg.mlp_layers, h),
            dec: GruActionDecoder::new(&cfg),
            c_mlp: MlpEncoder::new("mlp", input, h, cfg.mlp_layers, h),
            c_head: Dense::new("head", h, 1),
            ontology,
            vocab,
            sem_vocab,
            cfg,
            policy: ParamStore::new(),
            critic: ParamStore::new(),
            sem,
            c_sem,
        };
        me.init_stores(rng);
        Ok(me)
    }

    fn init_stores(&mut self, rng: &mut ChaCha8Rng) {
        let mut policy = ParamStore::new();
        self.sem.init(&mut policy, &self.sem_vocab, rng);
        self.mlp.init(&mut policy, rng);
        self.dec.init(&mut policy, &self.vocab, rng);
        let mut critic = ParamStore::new();
        self.c_sem.init(&mut critic, &self.sem_vocab, rng);
        self.c_mlp.init(&mut critic, rng);
        self.c_head.init(&mut critic, rng);
        self.policy = policy;
        self.critic = critic;
    }

    pub fn encode(&self, g: &mut Graph<S>, state: &DialogueState) -> NodeId {
        let feats = self.sem.features(g, &self.policy, &self.sem_vocab, state);
        self.mlp.forward(g, &self.policy, feats)
    }
}

impl<S: Scalar> Agent<S> for SemPolicy<S> {
    fn kind(&self) -> ArchKind {
        ArchKind::Sem
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
        let enc = self.encode(&mut g, state);
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
        let enc = self.encode(g, state);
        self.dec
            .score(g, &self.policy, &self.vocab, &self.ontology, state, enc, record)
    }

    fn critic_value(&self, g: &mut Graph<S>, state: &DialogueState) -> NodeId {
        let feats = self.c_sem.features(g, &self.critic, &self.sem_vocab, state);
        let h = self.c_mlp.forward(g, &self.critic, feats);
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

    /// Growth adds embedding rows for the new domain and its slots (policy
    /// and critic tables) and new decoder token embeddings; the MLP is
    /// untouched because the averaged feature width is fixed.
    fn register_domain(
        &mut self,
        ontology: Arc<Ontology>,
        domain: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), PolicyError> {
        self.ontology = ontology;
        self.vocab.register_domain(&self.ontology, domain)?;
        self.sem_vocab.register_domain(&self.ontology, domain);
        self.sem.grow(&mut self.policy, &self.sem_vocab, rng);
        self.c_sem.grow(&mut self.critic, &self.sem_vocab, rng);
        self.dec.grow(&mut self.policy, &self.vocab, rng);
        Ok(())
    }

    fn reinit(&mut self, rng: &mut ChaCha8Rng) {
        self.init_stores(rng);
    }

    fn meta_json(&self) -> serde_json::Value {
        json!({
            "arch": "sem",
            "model": self.cfg,
            "vocab": self.vocab,
            "sem_vocab": self.sem_vocab,
            "ontology": self.ontology.as_ref(),
        })
    }
}
