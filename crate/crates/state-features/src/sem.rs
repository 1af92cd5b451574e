//! Semantic features: trainable domain/intent/slot embeddings, averaged over
//! domains per feature category so the output width never depends on the
//! domain count.
//!
//! For category c and domain d with tuples (d, i_k, s_k):
//! `ŝ = mean_k [v_d, v_{i_k}, v_{s_k}]`, then a per-category residual block
//! `s = ŝ + relu(W_c ŝ + b_c)`; domains without tuples use the no-act
//! sentinel embedding in all three positions. The category output is the
//! mean over all ontology domains, and category outputs are concatenated in
//! the fixed order: user-goal, user-act, last-system-act, db, booked.

use dialogue_env::{DialogueState, Ontology};
use nn_core::graph::{Graph, NodeId};
use nn_core::{ParamStore, Scalar};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const CATEGORIES: [&str; 5] = ["goal", "uact", "sact", "db", "booked"];

/// Pseudo-intents and -slots used by the db and booked categories.
pub const INTENT_DB: &str = "db";
pub const INTENT_BOOKED: &str = "booked";
pub const SLOT_BUCKETS: [&str; 3] = ["zero", "one", "many"];
pub const SLOT_YES: &str = "yes";
pub const SLOT_NO: &str = "no";

/// Symbol table for the semantic embeddings. Append-only: growing the
/// ontology adds embedding rows, never reshapes existing ones.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SemVocab {
    pub domains: Vec<String>,
    pub intents: Vec<String>,
    pub slots: Vec<String>,
}

impl SemVocab {
    pub fn for_ontology(ontology: &Ontology) -> Self {
        let domains = ontology.domain_names().map(str::to_string).collect();
        let mut intents: Vec<String> =
            ["inform", "request", "book", "nooffer", "bye"].map(String::from).to_vec();
        intents.push(INTENT_DB.into());
        intents.push(INTENT_BOOKED.into());
        let mut slots: Vec<String> = vec!["none".into()];
        for d in &ontology.domains {
            for s in d.informed_slots() {
                if !slots.iter().any(|x| x == s) {
                    slots.push(s.to_string());
                }
            }
        }
        for s in SLOT_BUCKETS {
            slots.push(s.into());
        }
        slots.push(SLOT_YES.into());
        slots.push(SLOT_NO.into());
        Self { domains, intents, slots }
    }

    pub fn domain_index(&self, d: &str) -> Option<usize> {
        self.domains.iter().position(|x| x == d)
    }

    pub fn intent_index(&self, i: &str) -> Option<usize> {
        self.intents.iter().position(|x| x == i)
    }

    pub fn slot_index(&self, s: &str) -> Option<usize> {
        self.slots.iter().position(|x| x == s)
    }

    /// Registers a new domain and any new slots; returns how many embedding
    /// rows were added.
    pub fn register_domain(&mut self, ontology: &Ontology, domain: &str) -> usize {
        let mut added = 0;
        if self.domain_index(domain).is_none() {
            self.domains.push(domain.to_string());
            added += 1;
        }
        if let Ok(schema) = ontology.domain(domain) {
            for s in schema.informed_slots() {
                if self.slot_index(s).is_none() {
                    self.slots.push(s.to_string());
                    added += 1;
                }
            }
        }
        added
    }
}

/// Trainable tables and residual blocks under a name prefix.
#[derive(Debug, Clone)]
pub struct SemEmbeddings {
    prefix: String,
    pub dim: usize,
}

impl SemEmbeddings {
    pub fn new(prefix: impl Into<String>, dim: usize) -> Self {
        Self { prefix: prefix.into(), dim }
    }

    fn table(&self, kind: &str) -> String {
        format!("{}.emb.{kind}", self.prefix)
    }

    pub fn output_dim(&self) -> usize {
        3 * self.dim * CATEGORIES.len()
    }

    pub fn init<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        vocab: &SemVocab,
        rng: &mut ChaCha8Rng,
    ) {
        let d = self.dim;
        store.insert_init(&self.table("domain"), &[vocab.domains.len(), d], d, rng);
        store.insert_init(&self.table("intent"), &[vocab.intents.len(), d], d, rng);
        store.insert_init(&self.table("slot"), &[vocab.slots.len(), d], d, rng);
        store.insert_init(&self.table("noact"), &[d], d, rng);
        for cat in CATEGORIES {
            store.insert_init(&format!("{}.res.{cat}.w", self.prefix), &[3 * d, 3 * d], 3 * d, rng);
            store.insert(
                &format!("{}.res.{cat}.b", self.prefix),
                nn_core::NumArray::zeros(&[3 * d]),
                true,
            );
        }
    }

    /// Appends freshly initialized rows for newly registered symbols.
    pub fn grow<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        vocab: &SemVocab,
        rng: &mut ChaCha8Rng,
    ) {
        for (kind, rows) in [
            ("domain", vocab.domains.len()),
            ("intent", vocab.intents.len()),
            ("slot", vocab.slots.len()),
        ] {
            let name = self.table(kind);
            let old = store.get(&name).clone();
            if old.rows() < rows {
                let mut data = old.as_slice().to_vec();
                let bound = 1.0 / (self.dim as f64).sqrt();
                for _ in old.rows() * self.dim..rows * self.dim {
                    data.push(S::of(rand::Rng::gen_range(rng, -bound..bound)));
                }
                store.replace_value(&name, nn_core::NumArray::from_vec(&[rows, self.dim], data));
            }
        }
    }

    fn embed<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        kind: &str,
        idx: usize,
    ) -> NodeId {
        let table = g.param(store, &self.table(kind));
        g.slice_row(table, idx)
    }

    /// Concatenated per-category features `[3 * dim * 5]`, averaged over the
    /// vocab's domains.
    pub fn features<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        vocab: &SemVocab,
        state: &DialogueState,
    ) -> NodeId {
        let mut cat_outputs = Vec::with_capacity(CATEGORIES.len());
        for cat in CATEGORIES {
            let mut per_domain = Vec::with_capacity(vocab.domains.len());
            for (di, domain) in vocab.domains.iter().enumerate() {
                let tuples = self.category_tuples(cat, domain, vocab, state);
                let shat = if tuples.is_empty() {
                    let sent = g.param(store, &self.table("noact"));
                    let two = g.concat_vec(sent, sent);
                    g.concat_vec(two, sent)
                } else {
                    let rows: Vec<NodeId> = tuples
                        .iter()
                        .map(|&(ii, si)| {
                            let vd = self.embed(g, store, "domain", di);
                            let vi = self.embed(g, store, "intent", ii);
                            let vs = self.embed(g, store, "slot", si);
                            let two = g.concat_vec(vd, vi);
                            g.concat_vec(two, vs)
                        })
                        .collect();
                    if rows.len() == 1 {
                        rows[0]
                    } else {
                        let stacked = g.stack_rows(&rows);
                        g.mean_rows(stacked)
                    }
                };
                let w = g.param(store, &format!("{}.res.{cat}.w", self.prefix));
                let b = g.param(store, &format!("{}.res.{cat}.b", self.prefix));
                let lin = g.matvec(w, shat);
                let linb = g.add(lin, b);
                let act = g.relu(linb);
                per_domain.push(g.add(shat, act));
            }
            let stacked = g.stack_rows(&per_domain);
            cat_outputs.push(g.mean_rows(stacked));
        }
        let mut out = cat_outputs[0];
        for &c in &cat_outputs[1..] {
            out = g.concat_vec(out, c);
        }
        out
    }

    /// (intent index, slot index) tuples of a category for one domain.
    fn category_tuples(
        &self,
        cat: &str,
        domain: &str,
        vocab: &SemVocab,
        state: &DialogueState,
    ) -> Vec<(usize, usize)> {
        let ii = |i: &str| vocab.intent_index(i).expect("intent in vocab");
        let si = |s: &str| vocab.slot_index(s);
        match cat {
            "goal" => state
                .constraints
                .get(domain)
                .map(|m| {
                    m.keys()
                        .filter_map(|s| si(s).map(|sx| (ii("inform"), sx)))
                        .collect()
                })
                .unwrap_or_default(),
            "uact" => state
                .user_acts
                .iter()
                .filter(|a| a.domain == domain)
                .filter_map(|a| si(&a.slot).map(|sx| (ii(a.intent.as_str()), sx)))
                .collect(),
            "sact" => state
                .last_sys_acts
                .iter()
                .filter(|a| a.domain == domain)
                .filter_map(|a| si(&a.slot).map(|sx| (ii(a.intent.as_str()), sx)))
                .collect(),
            "db" => {
                let bucket = match state.db_count(domain) {
                    0 => "zero",
                    1 => "one",
                    _ => "many",
                };
                vec![(ii(INTENT_DB), si(bucket).expect("bucket slot"))]
            }
            "booked" => match state.booked.get(domain) {
                Some(&b) => {
                    let slot = if b { SLOT_YES } else { SLOT_NO };
                    vec![(ii(INTENT_BOOKED), si(slot).expect("flag slot"))]
                }
                None => Vec::new(),
            },
            other => panic!("unknown category {other}"),
        }
    }
}
