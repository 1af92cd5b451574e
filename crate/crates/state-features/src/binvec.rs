//! Flattened binary state vectors with an append-only layout registry.
//!
//! Each registered feature owns one index forever; adding a domain appends
//! new indices without moving existing ones, so a grown Bin policy keeps the
//! meaning of every weight it already has.

use std::collections::HashMap;

use dialogue_env::{DialogueState, DomainSchema, Ontology, GENERAL_DOMAIN, NO_SLOT};
use serde::{Deserialize, Serialize};

use crate::FeatureError;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct LayoutRegistry {
    entries: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LayoutRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry covering every domain of the ontology, in ontology order.
    pub fn for_ontology(ontology: &Ontology) -> Self {
        let mut reg = Self::new();
        reg.register(format!("user act {GENERAL_DOMAIN} bye {NO_SLOT}")).unwrap();
        for d in &ontology.domains {
            reg.extend_for_domain(d).unwrap();
        }
        reg
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index =
            self.entries.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    }

    pub fn register(&mut self, name: String) -> Result<usize, FeatureError> {
        if self.index.contains_key(&name) {
            return Err(FeatureError::DuplicateFeature(name));
        }
        let idx = self.entries.len();
        self.index.insert(name.clone(), idx);
        self.entries.push(name);
        Ok(idx)
    }

    /// Appends all features of a domain; returns the new indices.
    pub fn extend_for_domain(&mut self, d: &DomainSchema) -> Result<Vec<usize>, FeatureError> {
        let mut added = Vec::new();
        for slot in d.informable_names() {
            added.push(self.register(format!("user goal {} {}", d.name, slot))?);
        }
        for slot in d.informable_names() {
            added.push(self.register(format!("user act {} inform {}", d.name, slot))?);
        }
        for slot in &d.requestable {
            added.push(self.register(format!("user act {} request {}", d.name, slot))?);
        }
        for slot in d.informed_slots() {
            added.push(self.register(format!("last system act {} inform {}", d.name, slot))?);
        }
        for slot in d.informable_names() {
            added.push(self.register(format!("last system act {} request {}", d.name, slot))?);
        }
        added.push(self.register(format!("last system act {} book {NO_SLOT}", d.name))?);
        added.push(self.register(format!("last system act {} nooffer {NO_SLOT}", d.name))?);
        for bucket in ["zero", "one", "many"] {
            added.push(self.register(format!("data base {} {bucket}", d.name))?);
        }
        if d.bookable {
            added.push(self.register(format!("general {} booked", d.name))?);
        }
        Ok(added)
    }

    pub fn width(&self) -> usize {
        self.entries.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

/// Binary state vector at the registry's current width. Database counts are
/// bucketed into {0, 1, >1} indicators. Unregistered features in the state
/// are an error instructing registry extension.
pub fn flatten_binary(
    state: &DialogueState,
    registry: &LayoutRegistry,
) -> Result<Vec<f64>, FeatureError> {
    let mut v = vec![0.0; registry.width()];
    let set = |name: String, value: f64, v: &mut Vec<f64>| -> Result<(), FeatureError> {
        let idx = registry
            .index_of(&name)
            .ok_or(FeatureError::UnregisteredFeature(name))?;
        v[idx] = value;
        Ok(())
    };

    for (domain, slots) in &state.constraints {
        for slot in slots.keys() {
            set(format!("user goal {domain} {slot}"), 1.0, &mut v)?;
        }
    }
    for act in &state.user_acts {
        set(
            format!("user act {} {} {}", act.domain, act.intent.as_str(), act.slot),
            1.0,
            &mut v,
        )?;
    }
    for act in &state.last_sys_acts {
        set(
            format!("last system act {} {} {}", act.domain, act.intent.as_str(), act.slot),
            1.0,
            &mut v,
        )?;
    }
    for (domain, &count) in &state.db_counts {
        let bucket = match count {
            0 => "zero",
            1 => "one",
            _ => "many",
        };
        set(format!("data base {domain} {bucket}"), 1.0, &mut v)?;
    }
    for (domain, &booked) in &state.booked {
        if booked {
            set(format!("general {domain} booked"), 1.0, &mut v)?;
        }
    }
    Ok(v)
}
