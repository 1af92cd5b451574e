//! Transformer dialogue policy over description/value information items.
//!
//! State items are embedded from a frozen description encoder plus a learned
//! value projection, encoded by a set transformer whose attention is masked
//! so nothing attends to items of inactive domains. Actions decode as
//! (domain, intent, slot) sequences through a transformer decoder with
//! similarity matching against frozen token embeddings; a sigmoid domain
//! gate splits probability mass between the domains of the current user
//! turn and the rest. Trainable parameter shapes are independent of the
//! number of domains, so registering a new domain never grows the model.

use std::sync::Arc;

use dialogue_env::{DialogueState, Ontology};
use nn_core::attention::AttentionMask;
use nn_core::graph::{Graph, NodeId};
use nn_core::{Dense, NumArray, ParamStore, Scalar, TransformerDecoder, TransformerEncoder};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use state_features::{build_information_items, DescriptionEncoder, InformationItem};

use crate::actions::{ActionTuple, ActionVocab, STOP_DOMAIN};
use crate::agent::{
    ActionRecord, Agent, ArchKind, DecodeMode, ModelConfig, PolicyScore, StepKind,
};
use crate::decode::DecodeDriver;
use crate::PolicyError;

const DESC_DOMAIN: &str = "desc.domain";
const DESC_INTENT: &str = "desc.intent";
const DESC_SLOT: &str = "desc.slot";

pub struct DdptPolicy<S: Scalar> {
    ontology: Arc<Ontology>,
    vocab: ActionVocab,
    cfg: ModelConfig,
    desc: DescriptionEncoder,
    policy: ParamStore<S>,
    critic: ParamStore<S>,
    val_proj: Dense,
    info_proj: Dense,
    encoder: TransformerEncoder,
    decoder: TransformerDecoder,
    tok_proj: Dense,
    gate: Dense,
    c_val_proj: Dense,
    c_info_proj: Dense,
    c_encoder: TransformerEncoder,
    c_head: Dense,
}

impl<S: Scalar> DdptPolicy<S> {
    pub fn new(
        ontology: Arc<Ontology>,
        cfg: ModelConfig,
        desc: DescriptionEncoder,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        let vocab = ActionVocab::for_ontology(&ontology)?;
        Self::from_parts(ontology, cfg, desc, vocab, rng)
    }

    /// Rebuilds a policy around an exact pre-existing vocabulary (checkpoint
    /// restoration must not depend on ontology enumeration order).
    pub fn from_parts(
        ontology: Arc<Ontology>,
        cfg: ModelConfig,
        desc: DescriptionEncoder,
        vocab: ActionVocab,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        let h = cfg.hidden;
        let val_proj = Dense::new("val_proj", 1, cfg.value_embed_dim);
        let info_proj = Dense::new("info_proj", desc.dim() + cfg.value_embed_dim, h);
        let encoder = TransformerEncoder::new("enc", h, cfg.heads, cfg.encoder_layers, cfg.ff_hidden());
        let decoder = TransformerDecoder::new("dec", h, cfg.heads, cfg.decoder_layers, cfg.ff_hidden());
        let tok_proj = Dense::new("tok_proj", desc.dim(), h);
        let gate = Dense::new("gate", h, 1);
        let c_val_proj = Dense::new("val_proj", 1, cfg.value_embed_dim);
        let c_info_proj = Dense::new("info_proj", desc.dim() + cfg.value_embed_dim, h);
        let c_encoder = TransformerEncoder::new("enc", h, cfg.heads, cfg.encoder_layers, cfg.ff_hidden());
        let c_head = Dense::new("head", h, 1);

        let mut me = Self {
            ontology,
            vocab,
            cfg,
            desc,
            policy: ParamStore::new(),
            critic: ParamStore::new(),
            val_proj,
            info_proj,
            encoder,
            decoder,
            tok_proj,
            gate,
            c_val_proj,
            c_info_proj,
            c_encoder,
            c_head,
        };
        me.init_stores(rng)?;
        Ok(me)
    }

    fn init_stores(&mut self, rng: &mut ChaCha8Rng) -> Result<(), PolicyError> {
        let h = self.cfg.hidden;
        let mut policy = ParamStore::new();
        self.val_proj.init(&mut policy, rng);
        self.info_proj.init(&mut policy, rng);
        self.encoder.init(&mut policy, rng);
        self.decoder.init(&mut policy, rng);
        self.tok_proj.init(&mut policy, rng);
        self.gate.init(&mut policy, rng);
        policy.insert_init("step_emb", &[3, h], h, rng);
        policy.insert_init("start_emb", &[h], h, rng);
        policy.insert(DESC_DOMAIN, self.desc_table(&self.vocab.domains)?, false);
        policy.insert(DESC_INTENT, self.desc_table(&self.vocab.intents)?, false);
        policy.insert(DESC_SLOT, self.desc_table(&self.vocab.slots)?, false);

        let mut critic = ParamStore::new();
        critic.insert_init("cls_emb", &[h], h, rng);
        self.c_val_proj.init(&mut critic, rng);
        self.c_info_proj.init(&mut critic, rng);
        self.c_encoder.init(&mut critic, rng);
        self.c_head.init(&mut critic, rng);

        self.policy = policy;
        self.critic = critic;
        Ok(())
    }

    /// Frozen description vectors for a token list, one row per token.
    fn desc_table(&self, tokens: &[String]) -> Result<NumArray<S>, PolicyError> {
        let d = self.desc.dim();
        let mut data = Vec::with_capacity(tokens.len() * d);
        for t in tokens {
            let v = self.desc.encode(t)?;
            data.extend(v.into_iter().map(S::of));
        }
        Ok(NumArray::from_vec(&[tokens.len(), d], data))
    }

    /// Items embedded as `info_proj([desc(item), val_proj(value)])`.
    fn embed_items(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        val_proj: &Dense,
        info_proj: &Dense,
        items: &[InformationItem],
    ) -> Result<NodeId, PolicyError> {
        assert!(!items.is_empty(), "state yields no information items");
        let d = self.desc.dim();
        let mut desc_data = Vec::with_capacity(items.len() * d);
        let mut values = Vec::with_capacity(items.len());
        for it in items {
            desc_data.extend(self.desc.encode(&it.description)?.into_iter().map(S::of));
            values.push(S::of(it.value));
        }
        let desc_node = g.input(NumArray::from_vec(&[items.len(), d], desc_data));
        let val_node = g.input(NumArray::from_vec(&[items.len(), 1], values));
        let v = val_proj.forward(g, store, val_node);
        let cat = g.concat_cols(desc_node, v);
        Ok(info_proj.forward(g, store, cat))
    }

    fn active_flags(items: &[InformationItem]) -> Vec<bool> {
        let mut active: Vec<bool> = items.iter().map(|i| i.active).collect();
        if !active.iter().any(|&b| b) {
            // no active domain yet (never the case mid-dialogue); attend to all
            active.iter_mut().for_each(|b| *b = true);
        }
        active
    }

    /// Encoder memory plus the per-item activity flags used for masking.
    fn encode_state(
        &self,
        g: &mut Graph<S>,
        state: &DialogueState,
    ) -> Result<(NodeId, Vec<bool>), PolicyError> {
        let items = build_information_items(state, &self.ontology);
        let active = Self::active_flags(&items);
        let e = self.embed_items(g, &self.policy, &self.val_proj, &self.info_proj, &items)?;
        let mask = AttentionMask::from_key_active(items.len(), &active);
        let memory = self.encoder.forward(g, &self.policy, e, &mask);
        Ok((memory, active))
    }

    /// Projected token embedding matrices for the three step kinds.
    fn token_matrices(&self, g: &mut Graph<S>) -> (NodeId, NodeId, NodeId) {
        let dt = g.param(&self.policy, DESC_DOMAIN);
        let it = g.param(&self.policy, DESC_INTENT);
        let st = g.param(&self.policy, DESC_SLOT);
        (
            self.tok_proj.forward(g, &self.policy, dt),
            self.tok_proj.forward(g, &self.policy, it),
            self.tok_proj.forward(g, &self.policy, st),
        )
    }

    fn step_embedding(&self, g: &mut Graph<S>, kind: StepKind) -> NodeId {
        let table = g.param(&self.policy, "step_emb");
        g.slice_row(table, kind.index())
    }

    /// Decoder input for one step: previous token embedding plus the
    /// step-kind embedding.
    fn step_input(&self, g: &mut Graph<S>, prev: NodeId, kind: StepKind) -> NodeId {
        let l = self.step_embedding(g, kind);
        g.add(prev, l)
    }

    fn decoder_last_output(
        &self,
        g: &mut Graph<S>,
        inputs: &[NodeId],
        memory: NodeId,
        active: &[bool],
    ) -> NodeId {
        let targets = g.stack_rows(inputs);
        let mask = AttentionMask::from_key_active(inputs.len(), active);
        let outs = self.decoder.forward(g, &self.policy, targets, memory, &mask);
        g.slice_row(outs, inputs.len() - 1)
    }

    /// Gated domain distribution over the full domain vocabulary (stop
    /// included). With no current-turn domains (or the gate disabled) this
    /// is a plain softmax over all domains.
    fn domain_distribution(
        &self,
        g: &mut Graph<S>,
        o_t: NodeId,
        b_dom: NodeId,
        state: &DialogueState,
    ) -> NodeId {
        let logits = g.matvec(b_dom, o_t);
        let k = self.vocab.domains.len();
        let all = vec![true; k];
        if !self.cfg.domain_gate {
            return g.masked_softmax(logits, &all);
        }
        let curr = self.vocab.current_domain_mask(state);
        if !curr.iter().any(|&b| b) {
            return g.masked_softmax(logits, &all);
        }
        let non: Vec<bool> = curr.iter().map(|&b| !b).collect();
        let gate_out = self.gate.forward(g, &self.policy, o_t);
        let p_curr = g.sigmoid(gate_out);
        let p_curr_dist = g.masked_softmax(logits, &curr);
        let p_non_dist = g.masked_softmax(logits, &non);
        let a = g.scale_by_node(p_curr_dist, p_curr);
        let one_minus = g.one_minus(p_curr);
        let b = g.scale_by_node(p_non_dist, one_minus);
        g.add(a, b)
    }

    fn expected_steps(record: &ActionRecord) -> usize {
        3 * record.tuples.len() + usize::from(record.stopped)
    }
}

impl<S: Scalar> Agent<S> for DdptPolicy<S> {
    fn kind(&self) -> ArchKind {
        ArchKind::Ddpt
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
        let (memory, active) = self.encode_state(&mut g, state)?;
        let (b_dom, b_int, b_slot) = self.token_matrices(&mut g);
        let mut driver = DecodeDriver::sampling(mode);
        let start = g.param(&self.policy, "start_emb");
        let first = self.step_input(&mut g, start, StepKind::Domain);
        let mut inputs = vec![first];
        let mut tuples = Vec::new();
        let mut stopped = false;

        let all_domains = vec![true; self.vocab.domains.len()];
        for _ in 0..self.cfg.max_action_tuples {
            let o = self.decoder_last_output(&mut g, &inputs, memory, &active);
            let dist = self.domain_distribution(&mut g, o, b_dom, state);
            let d = driver.choose(&mut g, StepKind::Domain, dist, &all_domains, Some(rng))?;
            if d == STOP_DOMAIN {
                stopped = true;
                break;
            }
            let b_prev = g.slice_row(b_dom, d);
            let inp = self.step_input(&mut g, b_prev, StepKind::Intent);
            inputs.push(inp);
            let o = self.decoder_last_output(&mut g, &inputs, memory, &active);
            let imask = self.vocab.intent_mask(&self.ontology, state, d);
            let ilogits = g.matvec(b_int, o);
            let idist = g.masked_softmax(ilogits, &imask);
            let i = driver.choose(&mut g, StepKind::Intent, idist, &imask, Some(rng))?;

            let b_prev = g.slice_row(b_int, i);
            let inp = self.step_input(&mut g, b_prev, StepKind::Slot);
            inputs.push(inp);
            let o = self.decoder_last_output(&mut g, &inputs, memory, &active);
            let smask = self.vocab.slot_mask(&self.ontology, d, i);
            let slogits = g.matvec(b_slot, o);
            let sdist = g.masked_softmax(slogits, &smask);
            let s = driver.choose(&mut g, StepKind::Slot, sdist, &smask, Some(rng))?;

            tuples.push(ActionTuple { domain: d, intent: i, slot: s });
            let b_prev = g.slice_row(b_slot, s);
            let inp = self.step_input(&mut g, b_prev, StepKind::Domain);
            inputs.push(inp);
        }
        Ok(driver.into_record(tuples, stopped))
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
        let expected = Self::expected_steps(record);
        if record.steps.len() != expected {
            return Err(PolicyError::CorruptRecord(format!(
                "record has {} steps, expected {expected}",
                record.steps.len()
            )));
        }
        let (memory, active) = self.encode_state(g, state)?;
        let (b_dom, b_int, b_slot) = self.token_matrices(g);

        // teacher-forced inputs for the whole sequence in one decoder pass
        let start = g.param(&self.policy, "start_emb");
        let mut inputs = vec![self.step_input(g, start, StepKind::Domain)];
        for (k, t) in record.tuples.iter().enumerate() {
            let bd = g.slice_row(b_dom, t.domain);
            inputs.push(self.step_input(g, bd, StepKind::Intent));
            let bi = g.slice_row(b_int, t.intent);
            inputs.push(self.step_input(g, bi, StepKind::Slot));
            if k + 1 < record.tuples.len() || record.stopped {
                let bs = g.slice_row(b_slot, t.slot);
                inputs.push(self.step_input(g, bs, StepKind::Domain));
            }
        }
        debug_assert_eq!(inputs.len(), expected);
        let targets = g.stack_rows(&inputs);
        let mask = AttentionMask::from_key_active(inputs.len(), &active);
        let outs = self.decoder.forward(g, &self.policy, targets, memory, &mask);

        let mut driver = DecodeDriver::scoring(record);
        let all_domains = vec![true; self.vocab.domains.len()];
        for k in 0..=record.tuples.len() {
            let is_final_stop = k == record.tuples.len();
            if is_final_stop && !record.stopped {
                break;
            }
            let o = g.slice_row(outs, 3 * k);
            let dist = self.domain_distribution(g, o, b_dom, state);
            let d = driver.choose(g, StepKind::Domain, dist, &all_domains, None)?;
            if is_final_stop {
                debug_assert_eq!(d, STOP_DOMAIN);
                break;
            }
            let o = g.slice_row(outs, 3 * k + 1);
            let imask = self.vocab.intent_mask(&self.ontology, state, d);
            let ilogits = g.matvec(b_int, o);
            let idist = g.masked_softmax(ilogits, &imask);
            let i = driver.choose(g, StepKind::Intent, idist, &imask, None)?;

            let o = g.slice_row(outs, 3 * k + 2);
            let smask = self.vocab.slot_mask(&self.ontology, d, i);
            let slogits = g.matvec(b_slot, o);
            let sdist = g.masked_softmax(slogits, &smask);
            driver.choose(g, StepKind::Slot, sdist, &smask, None)?;
        }
        Ok(driver.into_score(g))
    }

    fn critic_value(&self, g: &mut Graph<S>, state: &DialogueState) -> NodeId {
        let items = build_information_items(state, &self.ontology);
        let active = Self::active_flags(&items);
        let e = self
            .embed_items(g, &self.critic, &self.c_val_proj, &self.c_info_proj, &items)
            .expect("hashed encoder cannot miss");
        let cls = g.param(&self.critic, "cls_emb");
        let rows = {
            let mut v = vec![cls];
            for i in 0..items.len() {
                v.push(g.slice_row(e, i));
            }
            g.stack_rows(&v)
        };
        let mut flags = vec![true];
        flags.extend_from_slice(&active);
        let mask = AttentionMask::from_key_active(items.len() + 1, &flags);
        let out = self.c_encoder.forward(g, &self.critic, rows, &mask);
        let o_cls = g.slice_row(out, 0);
        self.c_head.forward(g, &self.critic, o_cls)
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

    fn register_domain(
        &mut self,
        ontology: Arc<Ontology>,
        domain: &str,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(), PolicyError> {
        self.ontology = ontology;
        self.vocab.register_domain(&self.ontology, domain)?;
        // only the frozen description tables grow; trainable shapes are fixed
        let domains = self.desc_table(&self.vocab.domains)?;
        let intents = self.desc_table(&self.vocab.intents)?;
        let slots = self.desc_table(&self.vocab.slots)?;
        self.policy.replace_value(DESC_DOMAIN, domains);
        self.policy.replace_value(DESC_INTENT, intents);
        self.policy.replace_value(DESC_SLOT, slots);
        Ok(())
    }

    fn reinit(&mut self, rng: &mut ChaCha8Rng) {
        self.init_stores(rng).expect("reinit keeps a valid vocabulary");
    }

    fn meta_json(&self) -> serde_json::Value {
        json!({
            "arch": "ddpt",
            "model": self.cfg,
            "vocab": self.vocab,
            "ontology": self.ontology.as_ref(),
            "desc_dim": self.desc.dim(),
        })
    }
}
