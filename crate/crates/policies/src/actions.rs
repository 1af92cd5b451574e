//! Action vocabulary shared by every architecture, and the legality masks
//! that keep decoded tuples consistent with the environment's rules.

use dialogue_env::{intent_legal, slot_legal, DialogueState, Ontology, SysAct, SysIntent, NO_SLOT};
use serde::{Deserialize, Serialize};

use crate::PolicyError;

/// Index of the stop pseudo-domain; always 0 so appended domains never move it.
pub const STOP_DOMAIN: usize = 0;
pub const STOP_TOKEN: &str = "stop";

/// Growable symbol tables for (domain, intent, slot) decoding. Domains and
/// slots only ever append, so stored per-step distributions stay aligned
/// across ontology growth.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ActionVocab {
    pub domains: Vec<String>,
    pub intents: Vec<String>,
    pub slots: Vec<String>,
}

impl ActionVocab {
    pub fn for_ontology(ontology: &Ontology) -> Result<Self, PolicyError> {
        let mut vocab = Self {
            domains: vec![STOP_TOKEN.to_string()],
            intents: SysIntent::ALL.iter().map(|i| i.as_str().to_string()).collect(),
            slots: vec![NO_SLOT.to_string()],
        };
        for d in ontology.domain_names() {
            vocab.register_domain(ontology, d)?;
        }
        Ok(vocab)
    }

    /// Adds a domain (and its new slots). Returns the number of new domain
    /// and slot entries.
    pub fn register_domain(
        &mut self,
        ontology: &Ontology,
        domain: &str,
    ) -> Result<(usize, usize), PolicyError> {
        if domain == STOP_TOKEN {
            return Err(PolicyError::ReservedDomainName);
        }
        let schema = ontology.domain(domain)?;
        let mut new_domains = 0;
        if !self.domains.iter().any(|d| d == domain) {
            self.domains.push(domain.to_string());
            new_domains = 1;
        }
        let mut new_slots = 0;
        for s in schema.informed_slots() {
            if !self.slots.iter().any(|x| x == s) {
                self.slots.push(s.to_string());
                new_slots += 1;
            }
        }
        Ok((new_domains, new_slots))
    }

    pub fn domain_index(&self, name: &str) -> Option<usize> {
        self.domains.iter().position(|d| d == name)
    }

    pub fn intent_index(&self, name: &str) -> Option<usize> {
        self.intents.iter().position(|i| i == name)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s == name)
    }

    pub fn intent_of(&self, idx: usize) -> SysIntent {
        SysIntent::parse(&self.intents[idx]).expect("vocab intents are system intents")
    }

    /// Legal-intent mask for a (non-stop) domain in a state. Never empty:
    /// `request` is always available.
    pub fn intent_mask(
        &self,
        ontology: &Ontology,
        state: &DialogueState,
        domain_idx: usize,
    ) -> Vec<bool> {
        let domain = &self.domains[domain_idx];
        self.intents
            .iter()
            .enumerate()
            .map(|(i, _)| intent_legal(ontology, state, domain, self.intent_of(i)))
            .collect()
    }

    /// Legal-slot mask for a chosen (domain, intent).
    pub fn slot_mask(&self, ontology: &Ontology, domain_idx: usize, intent_idx: usize) -> Vec<bool> {
        let domain = &self.domains[domain_idx];
        let intent = self.intent_of(intent_idx);
        self.slots
            .iter()
            .map(|s| slot_legal(ontology, domain, intent, s))
            .collect()
    }

    /// Mask of domains the user mentioned in the current turn (the domain
    /// gate's "current" set); the stop domain is never current.
    pub fn current_domain_mask(&self, state: &DialogueState) -> Vec<bool> {
        let current = state.current_turn_domains();
        self.domains
            .iter()
            .enumerate()
            .map(|(i, d)| i != STOP_DOMAIN && current.contains(d))
            .collect()
    }

    pub fn to_sys_acts(&self, tuples: &[ActionTuple]) -> Vec<SysAct> {
        tuples
            .iter()
            .map(|t| SysAct {
                domain: self.domains[t.domain].clone(),
                intent: self.intent_of(t.intent),
                slot: self.slots[t.slot].clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTuple {
    pub domain: usize,
    pub intent: usize,
    pub slot: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use dialogue_env::{builtin_desk3, builtin_full5, DialogueState, UserAct};

    #[test]
    fn vocab_is_append_only_across_growth() {
        let desk = builtin_desk3();
        let full = builtin_full5();
        let mut vocab = ActionVocab::for_ontology(&desk).unwrap();
        assert_eq!(vocab.domains[STOP_DOMAIN], STOP_TOKEN);
        let before = vocab.clone();
        vocab.register_domain(&full, "bistro").unwrap();
        assert_eq!(&vocab.domains[..before.domains.len()], &before.domains[..]);
        assert_eq!(&vocab.slots[..before.slots.len()], &before.slots[..]);
        assert!(vocab.domain_index("bistro").is_some());
        assert!(vocab.slot_index("cuisine").is_some());
    }

    #[test]
    fn masks_track_database_counts() {
        let ont = builtin_desk3();
        let vocab = ActionVocab::for_ontology(&ont).unwrap();
        let mut state = DialogueState::initial(&ont);
        let lodging = vocab.domain_index("lodging").unwrap();
        let inform = vocab.intent_index("inform").unwrap();
        let nooffer = vocab.intent_index("nooffer").unwrap();
        let book = vocab.intent_index("book").unwrap();

        let m = vocab.intent_mask(&ont, &state, lodging);
        assert!(m[inform] && m[book] && !m[nooffer]);

        state
            .constraints
            .entry("lodging".into())
            .or_default()
            .insert("area".into(), "atlantis".into());
        state.refresh_db_counts(&ont);
        let m = vocab.intent_mask(&ont, &state, lodging);
        assert!(!m[inform] && m[nooffer]);
        assert!(m.iter().any(|&b| b), "mask never empties the intent space");

        let cab = vocab.domain_index("cab").unwrap();
        let m = vocab.intent_mask(&ont, &state, cab);
        assert!(!m[book], "book forbidden for non-bookable domains");

        // slot masks
        let sm = vocab.slot_mask(&ont, lodging, book);
        assert!(sm[vocab.slot_index(NO_SLOT).unwrap()]);
        assert_eq!(sm.iter().filter(|&&b| b).count(), 1);
        let req = vocab.intent_index("request").unwrap();
        let sm = vocab.slot_mask(&ont, lodging, req);
        assert!(sm[vocab.slot_index("area").unwrap()]);
        assert!(!sm[vocab.slot_index("phone").unwrap()], "request only covers informables");
    }

    #[test]
    fn current_domain_mask_follows_user_acts() {
        let ont = builtin_desk3();
        let vocab = ActionVocab::for_ontology(&ont).unwrap();
        let mut state = DialogueState::initial(&ont);
        state.apply_user_turn(&ont, &[UserAct::inform("museum", "area", "west")]);
        let m = vocab.current_domain_mask(&state);
        assert!(!m[STOP_DOMAIN]);
        assert!(m[vocab.domain_index("museum").unwrap()]);
        assert!(!m[vocab.domain_index("lodging").unwrap()]);
    }
}
