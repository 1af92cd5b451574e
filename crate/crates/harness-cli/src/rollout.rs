//! Dialogue rollouts and evaluation rounds shared by training, evaluation
//! and the reference runs.

use clear_learner::{Episode, Transition};
use dialogue_env::{DialogueEnv, EnvConfig, Ontology};
use nn_core::rng::stream;
use policies::{Agent, DecodeMode};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Plays one dialogue to termination and returns it as an episode with
/// frozen behavior quantities.
pub fn run_episode(
    agent: &dyn Agent<f64>,
    ontology: &Ontology,
    env_cfg: &EnvConfig,
    allowed: &[String],
    task: &str,
    dialogue_index: u64,
    env_rng: rand_chacha::ChaCha8Rng,
    mut pol_rng: rand_chacha::ChaCha8Rng,
    mode: DecodeMode,
) -> Result<Episode, HarnessError> {
    let mut env = DialogueEnv::reset(ontology, env_cfg.clone(), allowed, env_rng)?;
    let mut transitions = Vec::new();
    loop {
        let state = env.state().clone();
        let record = agent.decide(&state, mode, &mut pol_rng)?;
        let value = agent.behavior_value(&state);
        let acts = agent.vocab().to_sys_acts(&record.tuples);
        let out = env.step(&acts)?;
        transitions.push(Transition { state, action: record, reward: out.reward, value, done: out.done });
        if out.done {
            return Ok(Episode {
                transitions,
                task: task.to_string(),
                dialogue_index,
                success: out.success.unwrap_or(false),
                total_return: env.record().total_return,
            });
        }
    }
}

/// One line of the evaluation matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalRecord {
    pub seed: u64,
    pub checkpoint_index: u64,
    pub dialogues_trained: u64,
    pub task_at_checkpoint: String,
    pub domain: String,
    pub success_rate: f64,
    pub avg_return: f64,
    pub n_eval_dialogues: usize,
}

/// Evaluates the frozen policy on every ontology domain. Every evaluation
/// dialogue draws its own derived rng, so rounds are reproducible
/// regardless of execution order.
#[allow(clippy::too_many_arguments)]
pub fn eval_round(
    agent: &dyn Agent<f64>,
    ontology: &Ontology,
    env_cfg: &EnvConfig,
    seed: u64,
    checkpoint_index: u64,
    dialogues_trained: u64,
    task_at_checkpoint: &str,
    n_dialogues: usize,
) -> Result<Vec<EvalRecord>, HarnessError> {
    let mut out = Vec::with_capacity(ontology.domains.len());
    for (di, domain) in ontology.domain_names().enumerate() {
        let allowed = vec![domain.to_string()];
        let mut successes = 0usize;
        let mut returns = 0.0;
        for i in 0..n_dialogues {
            let ep = run_episode(
                agent,
                ontology,
                env_cfg,
                &allowed,
                domain,
                i as u64,
                stream(seed, "eval-env", &[checkpoint_index, di as u64, i as u64]),
                stream(seed, "eval-pol", &[checkpoint_index, di as u64, i as u64]),
                DecodeMode::Eval,
            )?;
            successes += ep.success as usize;
            returns += ep.total_return;
        }
        out.push(EvalRecord {
            seed,
            checkpoint_index,
            dialogues_trained,
            task_at_checkpoint: task_at_checkpoint.to_string(),
            domain: domain.to_string(),
            success_rate: successes as f64 / n_dialogues as f64,
            avg_return: returns / n_dialogues as f64,
            n_eval_dialogues: n_dialogues,
        });
    }
    Ok(out)
}
