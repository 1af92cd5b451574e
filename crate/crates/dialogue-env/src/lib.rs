//! Synthetic multi-domain task-oriented dialogue environment.
//!
//! Provides the ontology with per-domain databases, user goal sampling, an
//! agenda-based rule user simulator, the tracked dialogue state, action
//! legality masks, the information-overload reward and success evaluation.
//! Transcripts serialize as line-delimited JSON records for debugging.

pub mod acts;
pub mod env;
pub mod goal;
pub mod ontology;
pub mod simulator;
pub mod state;

pub use acts::{SysAct, SysIntent, UserAct, UserIntent, GENERAL_DOMAIN, NO_SLOT};
pub use env::{
    apply_system_acts,
    action_mask, evaluate_success, intent_legal, slot_legal, DialogueEnv, DialogueRecord,
    EnvConfig, StepOutcome, TurnRecord,
};
pub use goal::{sample_goal, DomainGoal, UserGoal};
pub use ontology::{builtin_desk3, builtin_full5, load_ontology, DomainSchema, Entity, Ontology, SlotDef};
pub use simulator::UserSimulator;
pub use state::DialogueState;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown domain {domain}; valid domains: {known:?}")]
    UnknownDomain { domain: String, known: Vec<String> },
    #[error("no usable domains: allowed {allowed:?}, ontology has {known:?}")]
    NoUsableDomains { allowed: Vec<String>, known: Vec<String> },
    #[error("invalid ontology: {0}")]
    InvalidOntology(String),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("illegal system act: {0}")]
    IllegalAct(String),
}
