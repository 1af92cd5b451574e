//! Minimal differentiable computation core.
//!
//! Dense layers, embeddings, multi-head attention, transformer
//! encoder/decoder blocks, a gated recurrent stack, masked softmax and an
//! Adam optimizer, all with reverse-mode gradients that are validated
//! against central finite differences. Math is generic over the scalar type
//! (`f32`/`f64`) via [`Scalar`]; concrete aliases are exported at the crate
//! root.

pub mod adam;
pub mod array;
pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod layers;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod transformer;

pub use adam::{adam_step, AdamState};
pub use array::NumArray;
pub use attention::{AttentionMask, MultiHeadAttention};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, Record, RecordPayload};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use gru::GruStack;
pub use layers::{Dense, LayerNorm};
pub use params::ParamStore;
pub use scalar::Scalar;
pub use transformer::{TransformerDecoder, TransformerEncoder};

use thiserror::Error;

/// Errors surfaced by the recoverable APIs of this crate. Tensor shape
/// violations inside graph construction panic instead, with messages naming
/// the offending shapes.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown parameter: {0}")]
    UnknownParam(String),
    #[error("missing gradient for trainable parameter {0}")]
    MissingGrad(String),
    #[error("attention mask row {0} has no attendable keys")]
    AllMasked(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// 32-bit arrays, adequate for training.
pub type Array32 = NumArray<f32>;
/// 64-bit arrays, required for gradient-check mode.
pub type Array64 = NumArray<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type ParamStore64 = ParamStore<f64>;
