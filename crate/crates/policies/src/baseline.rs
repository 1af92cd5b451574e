//! Shared machinery of the Bin and Sem baselines: a GRU action decoder with
//! trainable, randomly initialized token embeddings and no domain gate. The
//! decode loop and legality masks are the same ones the transformer policy
//! uses.

use dialogue_env::{DialogueState, Ontology};
use nn_core::graph::{Graph, NodeId};
use nn_core::{Dense, GruStack, ParamStore, Scalar};
use rand_chacha::ChaCha8Rng;

use crate::actions::{ActionTuple, ActionVocab, STOP_DOMAIN};
use crate::agent::{ActionRecord, DecodeMode, ModelConfig, PolicyScore, StepKind};
use crate::decode::DecodeDriver;
use crate::PolicyError;

pub(crate) struct GruActionDecoder {
    pub gru: GruStack,
    pub tok_proj: Dense,
    pub tok_dim: usize,
    pub hidden: usize,
}

impl GruActionDecoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            gru: GruStack::new("gru", cfg.gru_layers, cfg.hidden, cfg.hidden),
            tok_proj: Dense::new("tok_proj", cfg.token_embed_dim, cfg.hidden),
            tok_dim: cfg.token_embed_dim,
            hidden: cfg.hidden,
        }
    }

    pub fn init<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        vocab: &ActionVocab,
        rng: &mut ChaCha8Rng,
    ) {
        self.gru.init(store, rng);
        self.tok_proj.init(store, rng);
        let d = self.tok_dim;
        store.insert_init("emb.domain", &[vocab.domains.len(), d], d, rng);
        store.insert_init("emb.intent", &[vocab.intents.len(), d], d, rng);
        store.insert_init("emb.slot", &[vocab.slots.len(), d], d, rng);
        store.insert_init("emb.start", &[d], d, rng);
        store.insert_init("step_emb", &[3, self.hidden], self.hidden, rng);
    }

    /// Appends randomly initialized embedding rows for new vocab symbols.
    pub fn grow<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        vocab: &ActionVocab,
        rng: &mut ChaCha8Rng,
    ) {
        for (name, rows) in [
            ("emb.domain", vocab.domains.len()),
            ("emb.intent", vocab.intents.len()),
            ("emb.slot", vocab.slots.len()),
        ] {
            let old = store.get(name).clone();
            if old.rows() < rows {
                let mut data = old.as_slice().to_vec();
                let bound = 1.0 / (self.tok_dim as f64).sqrt();
                for _ in old.len()..rows * self.tok_dim {
                    data.push(S::of(rand::Rng::gen_range(rng, -bound..bound)));
                }
                store.replace_value(name, nn_core::NumArray::from_vec(&[rows, self.tok_dim], data));
            }
        }
    }

    fn token_matrix<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        kind: StepKind,
    ) -> NodeId {
        let table = match kind {
            StepKind::Domain => g.param(store, "emb.domain"),
            StepKind::Intent => g.param(store, "emb.intent"),
            StepKind::Slot => g.param(store, "emb.slot"),
        };
        self.tok_proj.forward(g, store, table)
    }

    fn step_input<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        prev: NodeId,
        kind: StepKind,
    ) -> NodeId {
        let table = g.param(store, "step_emb");
        let l = g.slice_row(table, kind.index());
        g.add(prev, l)
    }

    /// Runs the decode loop. With `rng` it samples (per `mode`); with a
    /// scoring driver it teacher-forces the stored record. The state
    /// encoding seeds every GRU layer's hidden state.
    #[allow(clippy::too_many_arguments)]
    pub fn run<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        vocab: &ActionVocab,
        ontology: &Ontology,
        state: &DialogueState,
        encoding: NodeId,
        max_tuples: usize,
        driver: &mut DecodeDriver<'_>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<ActionTuple>, bool), PolicyError> {
        let b_dom = self.token_matrix(g, store, StepKind::Domain);
        let b_int = self.token_matrix(g, store, StepKind::Intent);
        let b_slot = self.token_matrix(g, store, StepKind::Slot);
        let mut hidden: Vec<NodeId> = (0..self.gru.layers).map(|_| encoding).collect();

        let start_raw = g.param(store, "emb.start");
        let start = self.tok_proj.forward(g, store, start_raw);
        let mut prev = start;
        let mut tuples = Vec::new();
        let mut stopped = false;
        let all_domains = vec![true; vocab.domains.len()];

        for _ in 0..max_tuples {
            let inp = self.step_input(g, store, prev, StepKind::Domain);
            let o = self.gru.step(g, store, inp, &mut hidden);
            let logits = g.matvec(b_dom, o);
            let dist = g.masked_softmax(logits, &all_domains);
            let d = driver.choose(g, StepKind::Domain, dist, &all_domains, rng.as_deref_mut())?;
            if d == STOP_DOMAIN {
                stopped = true;
                break;
            }
            let bd = g.slice_row(b_dom, d);
            let inp = self.step_input(g, store, bd, StepKind::Intent);
            let o = self.gru.step(g, store, inp, &mut hidden);
            let imask = vocab.intent_mask(ontology, state, d);
            let ilogits = g.matvec(b_int, o);
            let idist = g.masked_softmax(ilogits, &imask);
            let i = driver.choose(g, StepKind::Intent, idist, &imask, rng.as_deref_mut())?;

            let bi = g.slice_row(b_int, i);
            let inp = self.step_input(g, store, bi, StepKind::Slot);
            let o = self.gru.step(g, store, inp, &mut hidden);
            let smask = vocab.slot_mask(ontology, d, i);
            let slogits = g.matvec(b_slot, o);
            let sdist = g.masked_softmax(slogits, &smask);
            let s = driver.choose(g, StepKind::Slot, sdist, &smask, rng.as_deref_mut())?;

            tuples.push(ActionTuple { domain: d, intent: i, slot: s });
            prev = g.slice_row(b_slot, s);
        }
        Ok((tuples, stopped))
    }

    pub fn decide<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        vocab: &ActionVocab,
        ontology: &Ontology,
        state: &DialogueState,
        encoding: NodeId,
        max_tuples: usize,
        mode: DecodeMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<ActionRecord, PolicyError> {
        let mut driver = DecodeDriver::sampling(mode);
        let (tuples, stopped) = self.run(
            g, store, vocab, ontology, state, encoding, max_tuples, &mut driver, Some(rng),
        )?;
        Ok(driver.into_record(tuples, stopped))
    }

    pub fn score<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        vocab: &ActionVocab,
        ontology: &Ontology,
        state: &DialogueState,
        encoding: NodeId,
        record: &ActionRecord,
    ) -> Result<PolicyScore, PolicyError> {
        let expected = 3 * record.tuples.len() + usize::from(record.stopped);
        if record.steps.len() != expected {
            return Err(PolicyError::CorruptRecord(format!(
                "record has {} steps, expected {expected}",
                record.steps.len()
            )));
        }
        let mut driver = DecodeDriver::scoring(record);
        // stopped records need one extra iteration for the final stop step
        let max = record.tuples.len() + usize::from(record.stopped);
        self.run(g, store, vocab, ontology, state, encoding, max, &mut driver, None)?;
        Ok(driver.into_score(g))
    }
}

/// Dense -> relu stack with a linear final layer.
pub(crate) struct MlpEncoder {
    pub layers: Vec<Dense>,
}

impl MlpEncoder {
    pub fn new(prefix: &str, input: usize, hidden: usize, depth: usize, output: usize) -> Self {
        assert!(depth >= 1);
        let mut layers = Vec::with_capacity(depth);
        for i in 0..depth {
            let din = if i == 0 { input } else { hidden };
            let dout = if i + 1 == depth { output } else { hidden };
            layers.push(Dense::new(format!("{prefix}.l{i}"), din, dout));
        }
        Self { layers }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        for l in &self.layers {
            l.init(store, rng);
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: NodeId) -> NodeId {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(g, store, h);
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        h
    }

    /// Grows the input layer by zero-initialized rows for appended features,
    /// keeping every existing weight bit-identical.
    pub fn grow_input<S: Scalar>(&mut self, store: &mut ParamStore<S>, new_input: usize) {
        let l0 = &self.layers[0];
        let name = l0.weight_name();
        let old = store.get(&name).clone();
        assert!(new_input >= old.rows(), "input layers only grow");
        if new_input == old.rows() {
            return;
        }
        let mut data = old.as_slice().to_vec();
        data.resize(new_input * old.cols(), S::zero());
        store.replace_value(&name, nn_core::NumArray::from_vec(&[new_input, old.cols()], data));
        self.layers[0] = Dense::new(
            name.trim_end_matches(".w").to_string(),
            new_input,
            old.cols(),
        );
    }
}
