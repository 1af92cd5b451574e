//! The tracked dialogue state visible to the policy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::acts::{SysAct, UserAct, UserIntent, GENERAL_DOMAIN};
use crate::ontology::Ontology;

/// Rule-based (exact) tracked state: conveyed constraints, the acts of the
/// current turn, database counts, booking flags and the set of domains the
/// user has mentioned so far. `active_domains` only ever grows within a
/// dialogue.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct DialogueState {
    /// domain -> slot -> conveyed value (present = mentioned).
    pub constraints: BTreeMap<String, BTreeMap<String, String>>,
    /// User acts of the current turn.
    pub user_acts: Vec<UserAct>,
    /// System acts of the previous system turn.
    pub last_sys_acts: Vec<SysAct>,
    pub db_counts: BTreeMap<String, usize>,
    /// Only bookable domains carry an entry.
    pub booked: BTreeMap<String, bool>,
    pub active_domains: BTreeSet<String>,
    /// Number of completed system turns.
    pub turn: usize,
}

impl DialogueState {
    /// Fresh state with database counts for the unconstrained ontology.
    pub fn initial(ontology: &Ontology) -> Self {
        let mut s = Self::default();
        for d in &ontology.domains {
            s.db_counts.insert(d.name.clone(), d.database.len());
            if d.bookable {
                s.booked.insert(d.name.clone(), false);
            }
        }
        s
    }

    pub fn domain_constraints(&self, domain: &str) -> BTreeMap<String, String> {
        self.constraints.get(domain).cloned().unwrap_or_default()
    }

    pub fn db_count(&self, domain: &str) -> usize {
        self.db_counts.get(domain).copied().unwrap_or(0)
    }

    pub fn is_booked(&self, domain: &str) -> bool {
        self.booked.get(domain).copied().unwrap_or(false)
    }

    /// Domains mentioned by the user in the current turn; drives the domain
    /// gate's notion of "current".
    pub fn current_turn_domains(&self) -> BTreeSet<String> {
        self.user_acts
            .iter()
            .filter(|a| a.domain != GENERAL_DOMAIN)
            .map(|a| a.domain.clone())
            .collect()
    }

    /// Applies one user turn: records acts, extends constraints and active
    /// domains, refreshes database counts.
    pub fn apply_user_turn(&mut self, ontology: &Ontology, acts: &[UserAct]) {
        self.user_acts = acts.to_vec();
        for act in acts {
            if act.domain == GENERAL_DOMAIN {
                continue;
            }
            self.active_domains.insert(act.domain.clone());
            if act.intent == UserIntent::Inform {
                if let Some(value) = &act.value {
                    self.constraints
                        .entry(act.domain.clone())
                        .or_default()
                        .insert(act.slot.clone(), value.clone());
                }
            }
        }
        self.refresh_db_counts(ontology);
    }

    pub fn refresh_db_counts(&mut self, ontology: &Ontology) {
        for d in &ontology.domains {
            let constraints = self.domain_constraints(&d.name);
            let (n, _) = ontology
                .db_query(&d.name, &constraints)
                .expect("ontology domains are queryable");
            self.db_counts.insert(d.name.clone(), n);
        }
    }
}
