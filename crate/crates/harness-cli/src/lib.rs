//! Continual-learning experiment harness: configuration, the schedule
//! runner with boundary checkpoints and resumption, periodic per-domain
//! evaluation, forgetting/forward-transfer reports, gold and random
//! reference runs and a terminal chat REPL.

pub mod chat;
pub mod config;
pub mod gold;
pub mod metrics;
pub mod rollout;
pub mod runner;

pub use chat::chat_loop;
pub use config::{domain_order, RunConfig, ScheduledTask, TaskSchedule};
pub use gold::{run_gold, GoldResult};
pub use metrics::{compute_fz, render_report_csv, EvalMatrix, FzReport, MetricKind};
pub use rollout::{eval_round, run_episode, EvalRecord};
pub use runner::{run_schedule, run_schedule_variant, RunVariant, SeedRunArtifacts};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] dialogue_env::EnvError),
    #[error(transparent)]
    Policy(#[from] policies::PolicyError),
    #[error(transparent)]
    Learner(#[from] clear_learner::LearnerError),
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
}
