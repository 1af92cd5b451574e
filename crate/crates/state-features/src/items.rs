//! Description/value information items: the atoms of the transformer
//! policy's state encoder.
//!
//! Per state, the emitted items are:
//! - `user goal <d> <s>` for every (domain, informable slot) pair, value 1 if
//!   the slot has been mentioned and 0 otherwise;
//! - `user act <d> <i> <s>` for each user act of the current turn, value 1;
//! - `last system act <d> <i> <s>` for each system act of the previous turn,
//!   value 1;
//! - `data base <d> number of entities` with the matching-entity count;
//! - `general <d> booked` for bookable domains, value 0/1.

use dialogue_env::{DialogueState, Ontology, GENERAL_DOMAIN};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationItem {
    pub description: String,
    pub value: f64,
    /// Owning domain; `general` items are always active.
    pub domain: String,
    pub active: bool,
}

impl InformationItem {
    fn new(description: String, value: f64, domain: &str, state: &DialogueState) -> Self {
        let active = domain == GENERAL_DOMAIN || state.active_domains.contains(domain);
        Self { description, value, domain: domain.to_string(), active }
    }
}

/// Items in a fixed, deterministic order: per ontology domain the goal slots,
/// then current user acts, previous system acts, database counts and booking
/// flags.
pub fn build_information_items(state: &DialogueState, ontology: &Ontology) -> Vec<InformationItem> {
    let mut items = Vec::new();
    for d in &ontology.domains {
        for slot in d.informable_names() {
            let mentioned = state
                .constraints
                .get(&d.name)
                .map(|m| m.contains_key(slot))
                .unwrap_or(false);
            items.push(InformationItem::new(
                format!("user goal {} {}", d.name, slot),
                if mentioned { 1.0 } else { 0.0 },
                &d.name,
                state,
            ));
        }
    }
    for act in &state.user_acts {
        items.push(InformationItem::new(
            format!("user act {} {} {}", act.domain, act.intent.as_str(), act.slot),
            1.0,
            &act.domain,
            state,
        ));
    }
    for act in &state.last_sys_acts {
        items.push(InformationItem::new(
            format!("last system act {} {} {}", act.domain, act.intent.as_str(), act.slot),
            1.0,
            &act.domain,
            state,
        ));
    }
    for d in &ontology.domains {
        items.push(InformationItem::new(
            format!("data base {} number of entities", d.name),
            state.db_count(&d.name) as f64,
            &d.name,
            state,
        ));
    }
    for d in &ontology.domains {
        if d.bookable {
            items.push(InformationItem::new(
                format!("general {} booked", d.name),
                if state.is_booked(&d.name) { 1.0 } else { 0.0 },
                &d.name,
                state,
            ));
        }
    }
    items
}
