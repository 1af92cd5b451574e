//! Ontology: domains, slots, value lists and databases.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::EnvError;

/// An entity row: slot name to value, covering every informable and
/// requestable slot of its domain.
pub type Entity = BTreeMap<String, String>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SlotDef {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainSchema {
    pub name: String,
    pub informable: Vec<SlotDef>,
    pub requestable: Vec<String>,
    pub bookable: bool,
    pub database: Vec<Entity>,
}

impl DomainSchema {
    pub fn informable_names(&self) -> impl Iterator<Item = &str> {
        self.informable.iter().map(|s| s.name.as_str())
    }

    pub fn has_informable(&self, slot: &str) -> bool {
        self.informable.iter().any(|s| s.name == slot)
    }

    pub fn has_requestable(&self, slot: &str) -> bool {
        self.requestable.iter().any(|s| s == slot)
    }

    /// Slots the system can inform on: informables plus requestables.
    pub fn informed_slots(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.informable_names().collect();
        for r in &self.requestable {
            if !out.contains(&r.as_str()) {
                out.push(r);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Ontology {
    pub domains: Vec<DomainSchema>,
}

impl Ontology {
    pub fn domain(&self, name: &str) -> Result<&DomainSchema, EnvError> {
        self.domains
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| EnvError::UnknownDomain {
                domain: name.to_string(),
                known: self.domain_names().map(str::to_string).collect(),
            })
    }

    pub fn has_domain(&self, name: &str) -> bool {
        self.domains.iter().any(|d| d.name == name)
    }

    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.iter().map(|d| d.name.as_str())
    }

    /// Entities of `domain` consistent with every given constraint;
    /// unconstrained slots match anything.
    pub fn db_query(
        &self,
        domain: &str,
        constraints: &BTreeMap<String, String>,
    ) -> Result<(usize, Vec<&Entity>), EnvError> {
        let schema = self.domain(domain)?;
        let matches: Vec<&Entity> = schema
            .database
            .iter()
            .filter(|e| {
                constraints
                    .iter()
                    .all(|(slot, value)| e.get(slot).map(|v| v == value).unwrap_or(false))
            })
            .collect();
        Ok((matches.len(), matches))
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.domains.is_empty() {
            return Err(EnvError::InvalidOntology("no domains defined".into()));
        }
        for d in &self.domains {
            let mut seen = std::collections::BTreeSet::new();
            for s in d.informable.iter().map(|s| s.name.as_str()).chain(d.requestable.iter().map(String::as_str)) {
                if !seen.insert(s) {
                    return Err(EnvError::InvalidOntology(format!(
                        "domain {}: duplicate slot name {s}",
                        d.name
                    )));
                }
            }
            for s in &d.informable {
                if s.values.is_empty() {
                    return Err(EnvError::InvalidOntology(format!(
                        "domain {}: informable slot {} has no values",
                        d.name, s.name
                    )));
                }
            }
            if d.database.is_empty() {
                return Err(EnvError::InvalidOntology(format!(
                    "domain {}: database is empty",
                    d.name
                )));
            }
            for (i, e) in d.database.iter().enumerate() {
                for slot in d.informable_names().chain(d.requestable.iter().map(String::as_str)) {
                    if !e.contains_key(slot) {
                        return Err(EnvError::InvalidOntology(format!(
                            "domain {}: entity {i} misses slot {slot}",
                            d.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, EnvError> {
        let ont: Ontology =
            serde_json::from_str(s).map_err(|e| EnvError::InvalidOntology(e.to_string()))?;
        ont.validate()?;
        Ok(ont)
    }

    pub fn from_path(path: &Path) -> Result<Self, EnvError> {
        let s = std::fs::read_to_string(path).map_err(|e| {
            EnvError::InvalidOntology(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("ontology serializes")
    }
}

fn slot(name: &str, values: &[&str]) -> SlotDef {
    SlotDef { name: name.into(), values: values.iter().map(|v| v.to_string()).collect() }
}

/// Deterministic synthetic domain: entities enumerate strided combinations of
/// informable values, with generated requestable values.
fn synth_domain(
    name: &str,
    informable: Vec<SlotDef>,
    requestable: &[&str],
    bookable: bool,
    db_size: usize,
) -> DomainSchema {
    let combos: usize = informable.iter().map(|s| s.values.len()).product();
    let stride = (combos / db_size).max(1);
    let mut database = Vec::with_capacity(db_size);
    for i in 0..db_size {
        let mut idx = (i * stride + i / 3) % combos;
        let mut e = Entity::new();
        for s in &informable {
            let v = &s.values[idx % s.values.len()];
            idx /= s.values.len();
            e.insert(s.name.clone(), v.clone());
        }
        for (ri, r) in requestable.iter().enumerate() {
            let v = match *r {
                "phone" => format!("555-{:04}", 100 + i * 7),
                "address" => format!("{} harbor road", i + 1),
                "hours" => if i % 2 == 0 { "9-17".into() } else { "10-18".into() },
                "parking" => if i % 2 == 0 { "yes".into() } else { "no".into() },
                "plate" => format!("CAB-{:03}", i + 1),
                "duration" => format!("{} minutes", 15 + 5 * (i % 6)),
                "platform" => format!("{}", 1 + (i % 4)),
                other => format!("{other}-{i}"),
            };
            let _ = ri;
            e.insert(r.to_string(), v);
        }
        database.push(e);
    }
    DomainSchema {
        name: name.into(),
        informable,
        requestable: requestable.iter().map(|s| s.to_string()).collect(),
        bookable,
        database,
    }
}

/// Three-domain ontology for desk-scale experiments: one bookable "hard"
/// domain and two "easy" ones. Slot names overlap across domains.
pub fn builtin_desk3() -> Ontology {
    let ont = Ontology {
        domains: vec![
            synth_domain(
                "lodging",
                vec![
                    slot("area", &["north", "south", "east", "west", "centre"]),
                    slot("price", &["cheap", "moderate", "expensive"]),
                    slot("rating", &["three", "four", "five"]),
                ],
                &["phone", "address", "parking"],
                true,
                20,
            ),
            synth_domain(
                "museum",
                vec![
                    slot("area", &["north", "south", "east", "west", "centre"]),
                    slot("theme", &["art", "history", "science", "nature"]),
                ],
                &["phone", "hours"],
                false,
                10,
            ),
            synth_domain(
                "cab",
                vec![
                    slot("area", &["north", "south", "east", "west", "centre"]),
                    slot("class", &["standard", "executive", "luxury"]),
                ],
                &["phone", "plate"],
                false,
                10,
            ),
        ],
    };
    ont.validate().expect("builtin ontology is valid");
    ont
}

/// Five-domain ontology mirroring the full experimental setup: three
/// bookable "hard" domains (three informables, larger databases) and two
/// "easy" non-bookable ones.
pub fn builtin_full5() -> Ontology {
    let desk = builtin_desk3();
    let mut domains = vec![desk.domains[0].clone()];
    domains.push(synth_domain(
        "bistro",
        vec![
            slot("area", &["north", "south", "east", "west", "centre"]),
            slot("price", &["cheap", "moderate", "expensive"]),
            slot("cuisine", &["italian", "indian", "chinese", "british"]),
        ],
        &["phone", "address", "hours"],
        true,
        20,
    ));
    domains.push(synth_domain(
        "shuttle",
        vec![
            slot("destination", &["airport", "harbor", "stadium", "downtown"]),
            slot("day", &["monday", "friday", "saturday"]),
            slot("price", &["cheap", "moderate", "expensive"]),
        ],
        &["duration", "platform", "phone"],
        true,
        20,
    ));
    domains.push(desk.domains[1].clone());
    domains.push(desk.domains[2].clone());
    let ont = Ontology { domains };
    ont.validate().expect("builtin ontology is valid");
    ont
}

/// Resolves `builtin:desk3`, `builtin:full5` or a file path.
pub fn load_ontology(spec: &str) -> Result<Ontology, EnvError> {
    match spec {
        "builtin:desk3" => Ok(builtin_desk3()),
        "builtin:full5" => Ok(builtin_full5()),
        path => Ontology::from_path(Path::new(path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        assert_eq!(builtin_desk3().domains.len(), 3);
        assert_eq!(builtin_full5().domains.len(), 5);
        assert_eq!(
            builtin_full5().domains.iter().filter(|d| d.bookable).count(),
            3
        );
    }

    #[test]
    fn db_query_counts() {
        let ont = builtin_desk3();
        // no constraints -> full DB size
        let (n, _) = ont.db_query("lodging", &BTreeMap::new()).unwrap();
        assert_eq!(n, 20);
        // contradictory value not in DB -> 0
        let mut c = BTreeMap::new();
        c.insert("area".to_string(), "atlantis".to_string());
        let (n, _) = ont.db_query("lodging", &c).unwrap();
        assert_eq!(n, 0);
        // unknown domain -> error naming valid ones
        let err = ont.db_query("zoo", &BTreeMap::new()).unwrap_err().to_string();
        assert!(err.contains("zoo") && err.contains("lodging"), "{err}");
    }

    #[test]
    fn two_constraint_query_on_fixture_db() {
        // hand-built 5-entity database; 2 entities match (area=west, price=cheap)
        let mut domain = synth_domain(
            "fixture",
            vec![slot("area", &["west", "east"]), slot("price", &["cheap", "dear"])],
            &["phone"],
            false,
            5,
        );
        domain.database = vec![
            BTreeMap::from([("area".into(), "west".into()), ("price".into(), "cheap".into()), ("phone".into(), "1".into())]),
            BTreeMap::from([("area".into(), "west".into()), ("price".into(), "dear".into()), ("phone".into(), "2".into())]),
            BTreeMap::from([("area".into(), "west".into()), ("price".into(), "cheap".into()), ("phone".into(), "3".into())]),
            BTreeMap::from([("area".into(), "east".into()), ("price".into(), "cheap".into()), ("phone".into(), "4".into())]),
            BTreeMap::from([("area".into(), "east".into()), ("price".into(), "dear".into()), ("phone".into(), "5".into())]),
        ];
        let ont = Ontology { domains: vec![domain] };
        let c = BTreeMap::from([("area".to_string(), "west".to_string()), ("price".to_string(), "cheap".to_string())]);
        let (n, rows) = ont.db_query("fixture", &c).unwrap();
        assert_eq!(n, 2);
        assert_eq!(rows[0]["phone"], "1");
    }

    #[test]
    fn json_roundtrip() {
        let ont = builtin_desk3();
        let s = ont.to_json_string();
        let back = Ontology::from_json_str(&s).unwrap();
        assert_eq!(ont, back);
    }
}
