//! Dialogue policy architectures over the shared differentiable core: the
//! dynamic transformer policy (description embeddings, inactive-domain
//! masking, domain gate, sequence action decoding by similarity matching)
//! and the two baselines with a GRU action decoder over flat-binary and
//! semantic state features. All three expose the same [`Agent`] interface
//! and honor the same action legality masks.

pub mod actions;
pub mod agent;
mod baseline;
pub mod bin;
pub mod checkpoint;
mod decode;
pub mod ddpt;
pub mod gradcheck;
pub mod sem;

pub use actions::{ActionTuple, ActionVocab, STOP_DOMAIN, STOP_TOKEN};
pub use agent::{
    ActionRecord, Agent, ArchKind, DecodeMode, ModelConfig, PolicyScore, StepKind, StepRecord,
};
pub use bin::BinPolicy;
pub use checkpoint::{load_agent, load_agent_with_meta, save_agent, save_agent_with_extra};
pub use ddpt::DdptPolicy;
pub use sem::SemPolicy;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Env(#[from] dialogue_env::EnvError),
    #[error(transparent)]
    Feature(#[from] state_features::FeatureError),
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
    #[error("the domain name '{}' is reserved", actions::STOP_TOKEN)]
    ReservedDomainName,
    #[error("stored action record is inconsistent: {0}")]
    CorruptRecord(String),
    #[error("stored symbol {symbol} at step {step} has zero probability under the current masks")]
    ZeroProbSymbol { step: usize, symbol: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Convenience constructor used by the harness and tests.
pub fn build_agent<S: nn_core::Scalar>(
    arch: ArchKind,
    ontology: std::sync::Arc<dialogue_env::Ontology>,
    cfg: ModelConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Box<dyn Agent<S>>, PolicyError> {
    Ok(match arch {
        ArchKind::Ddpt => {
            let desc = state_features::DescriptionEncoder::hashed(cfg.desc_dim);
            Box::new(DdptPolicy::new(ontology, cfg, desc, rng)?)
        }
        ArchKind::Bin => Box::new(BinPolicy::new(ontology, cfg, rng)?),
        ArchKind::Sem => Box::new(SemPolicy::new(ontology, cfg, rng)?),
    })
}
