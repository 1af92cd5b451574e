//! Per-dialogue user goals and their sampler.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ontology::Ontology;
use crate::{EnvConfig, EnvError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainGoal {
    pub domain: String,
    /// Informable slot -> target value; satisfiable by at least one entity.
    pub constraints: BTreeMap<String, String>,
    pub requests: BTreeSet<String>,
    pub needs_booking: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UserGoal {
    pub domains: Vec<DomainGoal>,
}

impl UserGoal {
    pub fn domain(&self, name: &str) -> Option<&DomainGoal> {
        self.domains.iter().find(|d| d.domain == name)
    }
}

/// Samples a goal over 1-2 of the allowed domains. Constraints are copied
/// from a database entity, so a satisfying entity always exists; requests are
/// a non-empty subset of the requestables; booking necessity follows the
/// domain's bookable flag.
pub fn sample_goal(
    ontology: &Ontology,
    allowed_domains: &[String],
    cfg: &EnvConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UserGoal, EnvError> {
    let usable: Vec<&str> = allowed_domains
        .iter()
        .map(String::as_str)
        .filter(|d| ontology.has_domain(d))
        .collect();
    if usable.is_empty() {
        return Err(EnvError::NoUsableDomains {
            allowed: allowed_domains.to_vec(),
            known: ontology.domain_names().map(str::to_string).collect(),
        });
    }
    let n_domains = if usable.len() >= 2 && rng.gen_bool(cfg.two_domain_prob) { 2 } else { 1 };
    let mut picked: Vec<&str> = usable.clone();
    picked.shuffle(rng);
    picked.truncate(n_domains);

    let mut domains = Vec::with_capacity(n_domains);
    for name in picked {
        let schema = ontology.domain(name)?;
        let entity = schema
            .database
            .get(rng.gen_range(0..schema.database.len()))
            .expect("validated database is non-empty");

        let max_c = cfg.max_goal_constraints.min(schema.informable.len()).max(1);
        let n_con = rng.gen_range(1..=max_c);
        let mut inf_slots: Vec<&str> = schema.informable_names().collect();
        inf_slots.shuffle(rng);
        let mut constraints = BTreeMap::new();
        for s in inf_slots.into_iter().take(n_con) {
            constraints.insert(s.to_string(), entity[s].clone());
        }

        let max_r = cfg.max_goal_requests.min(schema.requestable.len()).max(1);
        let n_req = rng.gen_range(1..=max_r);
        let mut req_slots: Vec<&str> = schema.requestable.iter().map(String::as_str).collect();
        req_slots.shuffle(rng);
        let requests: BTreeSet<String> =
            req_slots.into_iter().take(n_req).map(str::to_string).collect();

        domains.push(DomainGoal {
            domain: name.to_string(),
            constraints,
            requests,
            needs_booking: schema.bookable,
        });
    }
    Ok(UserGoal { domains })
}
