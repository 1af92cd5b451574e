//! Continual reinforcement learning for dialogue policies: an episodic
//! reservoir replay buffer, truncated importance-sampling value targets,
//! off-policy actor/critic losses and behavioral-cloning regularizers over
//! mixed online/offline batches.

pub mod buffer;
pub mod learner;
pub mod vtrace;

pub use buffer::{Episode, ReplayBuffer, Transition};
pub use learner::{ClearConfig, ClearLearner, LearnerSnapshot, UpdateMetrics};
pub use vtrace::{advantages, vtrace_targets, vtrace_targets_direct, VtraceConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("learner config: {0}")]
    Config(String),
    #[error("non-finite importance ratio {ratio} at segment index {index}")]
    NonFiniteRatio { index: usize, ratio: f64 },
    #[error(transparent)]
    Policy(#[from] policies::PolicyError),
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
}
