//! Self-describing agent checkpoints.
//!
//! Parameters of the policy and critic stores are written as `policy/...`
//! and `critic/...` records in the binary container; a `__meta__` byte
//! record carries the architecture, model dimensions, vocabularies, layout
//! registry and the full ontology, so `load_agent` needs nothing but the
//! file.

use std::path::Path;
use std::sync::Arc;

use nn_core::checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, Record};
use nn_core::rng::stream;
use nn_core::Scalar;
use serde_json::Value;
use state_features::{DescriptionEncoder, LayoutRegistry, SemVocab};

use crate::actions::ActionVocab;
use crate::agent::{Agent, ArchKind, ModelConfig};
use crate::{BinPolicy, DdptPolicy, PolicyError, SemPolicy};

pub const META_RECORD: &str = "__meta__";

pub fn save_agent<S: Scalar>(
    agent: &dyn Agent<S>,
    path: &Path,
    header: CheckpointHeader,
) -> Result<(), PolicyError> {
    save_agent_with_extra(agent, path, header, None)
}

/// Like [`save_agent`], with extra caller metadata merged into the meta
/// record under `"extra"` (the harness stores its environment config there).
pub fn save_agent_with_extra<S: Scalar>(
    agent: &dyn Agent<S>,
    path: &Path,
    header: CheckpointHeader,
    extra: Option<&Value>,
) -> Result<(), PolicyError> {
    let mut meta = agent.meta_json();
    if let Some(extra) = extra {
        meta["extra"] = extra.clone();
    }
    let mut records = Vec::new();
    records.push(Record::bytes(
        META_RECORD,
        serde_json::to_vec(&meta).expect("meta serializes"),
    ));
    for e in agent.policy_store().iter() {
        records.push(Record::from_array(&format!("policy/{}", e.name), &e.value));
    }
    for e in agent.critic_store().iter() {
        records.push(Record::from_array(&format!("critic/{}", e.name), &e.value));
    }
    write_checkpoint(path, header, &records)?;
    Ok(())
}

fn meta_field<'v>(meta: &'v Value, key: &str) -> Result<&'v Value, PolicyError> {
    meta.get(key)
        .ok_or_else(|| PolicyError::Checkpoint(format!("meta record misses field {key}")))
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value, what: &str) -> Result<T, PolicyError> {
    serde_json::from_value(v.clone())
        .map_err(|e| PolicyError::Checkpoint(format!("bad {what} in meta: {e}")))
}

pub fn load_agent<S: Scalar>(
    path: &Path,
) -> Result<(Box<dyn Agent<S>>, CheckpointHeader), PolicyError> {
    let (agent, header, _) = load_agent_with_meta(path)?;
    Ok((agent, header))
}

pub fn load_agent_with_meta<S: Scalar>(
    path: &Path,
) -> Result<(Box<dyn Agent<S>>, CheckpointHeader, Value), PolicyError> {
    let (header, records) = read_checkpoint(path)?;
    let meta_rec = records
        .iter()
        .find(|r| r.name == META_RECORD)
        .ok_or_else(|| PolicyError::Checkpoint("checkpoint has no meta record".into()))?;
    let meta: Value = match &meta_rec.payload {
        nn_core::checkpoint::RecordPayload::Bytes(b) => serde_json::from_slice(b)
            .map_err(|e| PolicyError::Checkpoint(format!("meta record is not JSON: {e}")))?,
        _ => return Err(PolicyError::Checkpoint("meta record is not a byte record".into())),
    };

    let arch: ArchKind = parse(meta_field(&meta, "arch")?, "arch")?;
    let cfg: ModelConfig = parse(meta_field(&meta, "model")?, "model config")?;
    let ontology: dialogue_env::Ontology = parse(meta_field(&meta, "ontology")?, "ontology")?;
    let ontology = Arc::new(ontology);
    let vocab: ActionVocab = parse(meta_field(&meta, "vocab")?, "action vocab")?;

    // construction rng is irrelevant: every parameter is overwritten below
    let mut rng = stream(header.seed, "load", &[]);
    let mut agent: Box<dyn Agent<S>> = match arch {
        ArchKind::Ddpt => {
            let desc_dim: usize = parse(meta_field(&meta, "desc_dim")?, "desc_dim")?;
            let desc = DescriptionEncoder::hashed(desc_dim);
            Box::new(DdptPolicy::from_parts(ontology, cfg, desc, vocab, &mut rng)?)
        }
        ArchKind::Bin => {
            let mut registry: LayoutRegistry = parse(meta_field(&meta, "registry")?, "registry")?;
            registry.rebuild_index();
            Box::new(BinPolicy::from_parts(ontology, cfg, vocab, registry, &mut rng)?)
        }
        ArchKind::Sem => {
            let sem_vocab: SemVocab = parse(meta_field(&meta, "sem_vocab")?, "sem vocab")?;
            Box::new(SemPolicy::from_parts(ontology, cfg, vocab, sem_vocab, &mut rng)?)
        }
    };

    for r in &records {
        if r.name == META_RECORD {
            continue;
        }
        let (store, name) = if let Some(n) = r.name.strip_prefix("policy/") {
            (agent.policy_store_mut(), n)
        } else if let Some(n) = r.name.strip_prefix("critic/") {
            (agent.critic_store_mut(), n)
        } else {
            return Err(PolicyError::Checkpoint(format!("unexpected record {}", r.name)));
        };
        if !store.contains(name) {
            return Err(PolicyError::Checkpoint(format!(
                "record {} does not match the reconstructed architecture",
                r.name
            )));
        }
        let arr = r.to_array::<S>()?;
        if arr.shape() != store.get(name).shape() {
            return Err(PolicyError::Checkpoint(format!(
                "record {} has shape {:?}, architecture expects {:?}",
                r.name,
                arr.shape(),
                store.get(name).shape()
            )));
        }
        store.replace_value(name, arr);
    }
    Ok((agent, header, meta))
}
