//! State featurizers for the three policy architectures: description/value
//! information items, a frozen description encoder (hashed trigrams or a
//! loaded table), flattened binary vectors with an append-only layout, and
//! semantic embedding features averaged over domains.

pub mod binvec;
pub mod descenc;
pub mod items;
pub mod sem;

pub use binvec::{flatten_binary, LayoutRegistry};
pub use descenc::{cosine, DescriptionEncoder, DEFAULT_DESC_DIM};
pub use items::{build_information_items, InformationItem};
pub use sem::{SemEmbeddings, SemVocab};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("description is empty")]
    EmptyDescription,
    #[error("description not in loaded table: {0:?}")]
    MissingDescription(String),
    #[error("embedding table: {0}")]
    EncoderTable(String),
    #[error("feature already registered: {0}")]
    DuplicateFeature(String),
    #[error("feature not registered (extend the layout registry first): {0}")]
    UnregisteredFeature(String),
}
