//! The continual-learning schedule runner.
//!
//! Per seed: iterate the task sequence, train on each task's domain for its
//! budget, evaluate all domains every `eval.interval` dialogues and at every
//! task boundary, checkpoint at boundaries, and keep enough state to resume
//! an interrupted run from the last completed boundary. All randomness is
//! derived from (seed, purpose, indices), so uninterrupted and resumed runs
//! produce identical artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clear_learner::{ClearLearner, LearnerSnapshot, UpdateMetrics};
use dialogue_env::Ontology;
use nn_core::rng::stream;
use nn_core::{AdamState, CheckpointHeader};
use policies::{build_agent, load_agent_with_meta, save_agent_with_extra, Agent, DecodeMode};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TaskSchedule};
use crate::rollout::{eval_round, run_episode, EvalRecord};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunVariant {
    /// Normal continual training.
    Train,
    /// Never trains; reinitializes all trainable parameters at every task
    /// boundary (the random reference model).
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunStateFile {
    seed: u64,
    completed_blocks: usize,
    dialogues_trained: u64,
    eval_rounds: u64,
}

#[derive(Debug, Serialize)]
struct TrainLogLine<'a> {
    dialogues_trained: u64,
    task: &'a str,
    #[serde(flatten)]
    metrics: &'a UpdateMetrics,
}

#[derive(Debug)]
pub struct SeedRunArtifacts {
    pub seed_dir: PathBuf,
    pub records: Vec<EvalRecord>,
}

fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in rows {
        serde_json::to_writer(&mut f, r).map_err(|e| HarnessError::Io(e.into()))?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Drops JSONL rows recorded after the resumed boundary.
fn truncate_jsonl(path: &Path, keep: impl Fn(&serde_json::Value) -> bool) -> Result<(), HarnessError> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let kept: Vec<&str> = text
        .lines()
        .filter(|l| {
            serde_json::from_str::<serde_json::Value>(l)
                .map(|v| keep(&v))
                .unwrap_or(false)
        })
        .collect();
    let mut out = kept.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs the full schedule for every configured seed; returns per-seed
/// artifacts. Existing complete seeds are left untouched; interrupted seeds
/// resume from their last boundary checkpoint.
pub fn run_schedule(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<SeedRunArtifacts>, HarnessError> {
    run_schedule_variant(cfg, out_dir, RunVariant::Train)
}

pub fn run_schedule_variant(
    cfg: &RunConfig,
    out_dir: &Path,
    variant: RunVariant,
) -> Result<Vec<SeedRunArtifacts>, HarnessError> {
    cfg.validate()?;
    let ontology = Arc::new(cfg.load_ontology()?);
    let schedule = TaskSchedule::build(cfg, &ontology)?;
    fs::create_dir_all(out_dir)?;

    let config_copy = out_dir.join("config.toml");
    let rendered = cfg.to_toml_string();
    if config_copy.exists() {
        let existing = fs::read_to_string(&config_copy)?;
        if existing != rendered {
            return Err(HarnessError::Config(format!(
                "run directory {} was created with a different config",
                out_dir.display()
            )));
        }
    } else {
        fs::write(&config_copy, &rendered)?;
    }

    let mut artifacts = Vec::new();
    for &seed in &cfg.run.seeds {
        artifacts.push(run_seed(cfg, &ontology, &schedule, seed, out_dir, variant)?);
    }
    Ok(artifacts)
}

fn run_seed(
    cfg: &RunConfig,
    ontology: &Arc<Ontology>,
    schedule: &TaskSchedule,
    seed: u64,
    out_dir: &Path,
    variant: RunVariant,
) -> Result<SeedRunArtifacts, HarnessError> {
    let seed_dir = out_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(seed_dir.join("checkpoints"))?;
    fs::create_dir_all(seed_dir.join("resume"))?;
    let matrix_path = seed_dir.join("eval_matrix.jsonl");
    let train_log_path = seed_dir.join("train_log.jsonl");
    let state_path = seed_dir.join("run_state.json");
    let boundaries = schedule.boundaries();
    let total_blocks = schedule.tasks.len();

    let mut agent: Box<dyn Agent<f64>>;
    let mut learner: ClearLearner<f64>;
    let mut eval_rounds: u64;
    let start_block: usize;

    if state_path.exists() {
        let state: RunStateFile = serde_json::from_str(&fs::read_to_string(&state_path)?)
            .map_err(|e| HarnessError::Config(format!("corrupt run_state.json: {e}")))?;
        if state.completed_blocks >= total_blocks {
            let records = load_records(&matrix_path)?;
            return Ok(SeedRunArtifacts { seed_dir, records });
        }
        let j = state.completed_blocks;
        let ckpt = seed_dir.join(format!("checkpoints/boundary_{j:03}.ckpt"));
        let (loaded, _, _) = load_agent_with_meta::<f64>(&ckpt)?;
        agent = loaded;
        learner = restore_learner(cfg, seed, &seed_dir, j, agent.as_ref())?;
        eval_rounds = state.eval_rounds;
        start_block = j;
        let limit = boundaries[j];
        truncate_jsonl(&matrix_path, |v| {
            v.get("dialogues_trained").and_then(|d| d.as_u64()).map(|d| d <= limit).unwrap_or(false)
        })?;
        truncate_jsonl(&train_log_path, |v| {
            v.get("dialogues_trained").and_then(|d| d.as_u64()).map(|d| d <= limit).unwrap_or(false)
        })?;
    } else {
        let mut init_rng = stream(seed, "agent-init", &[]);
        agent = build_agent(cfg.arch()?, ontology.clone(), cfg.model.clone(), &mut init_rng)?;
        learner = ClearLearner::new(cfg.learner.clone(), seed)?;
        eval_rounds = 0;
        start_block = 0;
        // initial evaluation before any training (checkpoint index 0)
        let records = eval_round(
            agent.as_ref(),
            ontology,
            &cfg.env.env,
            seed,
            0,
            0,
            "none",
            cfg.eval.dialogues_per_domain,
        )?;
        append_jsonl(&matrix_path, &records)?;
        save_boundary(cfg, seed, &seed_dir, 0, 0, agent.as_ref(), &learner)?;
        write_state(&state_path, seed, 0, 0, eval_rounds)?;
    }

    for (block_idx, task) in schedule.tasks.iter().enumerate().skip(start_block) {
        let j = block_idx + 1;
        if variant == RunVariant::Random {
            let mut rng = stream(seed, "reinit", &[j as u64]);
            agent.reinit(&mut rng);
        }
        let allowed = vec![task.domain.clone()];
        for d in 1..=task.budget {
            let global = boundaries[j - 1] + d;
            if variant == RunVariant::Train {
                let episode = run_episode(
                    agent.as_ref(),
                    ontology,
                    &cfg.env.env,
                    &allowed,
                    &task.domain,
                    global,
                    stream(seed, "train-env", &[global]),
                    stream(seed, "train-pol", &[global]),
                    DecodeMode::Train,
                )?;
                if let Some(metrics) = learner.observe(episode, agent.as_mut())? {
                    append_jsonl(
                        &train_log_path,
                        &[TrainLogLine { dialogues_trained: global, task: &task.domain, metrics: &metrics }],
                    )?;
                }
                if d % cfg.eval.interval == 0 && d != task.budget {
                    eval_rounds += 1;
                    let records = eval_round(
                        agent.as_ref(),
                        ontology,
                        &cfg.env.env,
                        seed,
                        eval_rounds,
                        global,
                        &task.domain,
                        cfg.eval.dialogues_per_domain,
                    )?;
                    append_jsonl(&matrix_path, &records)?;
                }
            }
        }
        // boundary evaluation and checkpoint
        eval_rounds += 1;
        let records = eval_round(
            agent.as_ref(),
            ontology,
            &cfg.env.env,
            seed,
            eval_rounds,
            boundaries[j],
            &task.domain,
            cfg.eval.dialogues_per_domain,
        )?;
        append_jsonl(&matrix_path, &records)?;
        save_boundary(cfg, seed, &seed_dir, j, boundaries[j], agent.as_ref(), &learner)?;
        write_state(&state_path, seed, j, boundaries[j], eval_rounds)?;
    }

    let records = load_records(&matrix_path)?;
    Ok(SeedRunArtifacts { seed_dir, records })
}

fn write_state(
    path: &Path,
    seed: u64,
    completed_blocks: usize,
    dialogues_trained: u64,
    eval_rounds: u64,
) -> Result<(), HarnessError> {
    let state = RunStateFile { seed, completed_blocks, dialogues_trained, eval_rounds };
    fs::write(path, serde_json::to_string_pretty(&state).expect("state serializes"))?;
    Ok(())
}

fn save_boundary(
    cfg: &RunConfig,
    seed: u64,
    seed_dir: &Path,
    block: usize,
    dialogues: u64,
    agent: &dyn Agent<f64>,
    learner: &ClearLearner<f64>,
) -> Result<(), HarnessError> {
    let header = CheckpointHeader { step: dialogues, seed, stream: block as u64 };
    let extra = serde_json::json!({
        "env": cfg.env.env,
        "ontology_spec": cfg.env.ontology,
        "seed": seed,
        "block": block,
    });
    save_agent_with_extra(
        agent,
        &seed_dir.join(format!("checkpoints/boundary_{block:03}.ckpt")),
        header,
        Some(&extra),
    )?;
    let snap = learner.snapshot();
    fs::write(
        seed_dir.join(format!("resume/learner_{block:03}.json")),
        serde_json::to_vec(&snap).expect("snapshot serializes"),
    )?;
    nn_core::checkpoint::write_checkpoint(
        &seed_dir.join(format!("resume/opt_{block:03}.ckpt")),
        header,
        &learner.optimizer_records(agent),
    )?;
    Ok(())
}

fn restore_learner(
    cfg: &RunConfig,
    seed: u64,
    seed_dir: &Path,
    block: usize,
    agent: &dyn Agent<f64>,
) -> Result<ClearLearner<f64>, HarnessError> {
    let snap_path = seed_dir.join(format!("resume/learner_{block:03}.json"));
    let snap: LearnerSnapshot = serde_json::from_str(&fs::read_to_string(&snap_path)?)
        .map_err(|e| HarnessError::Config(format!("corrupt learner snapshot: {e}")))?;
    let mut learner = ClearLearner::restore(
        cfg.learner.clone(),
        seed,
        snap,
        AdamState::new(cfg.learner.policy_lr),
        AdamState::new(cfg.learner.critic_lr),
    )?;
    let (_, records) =
        nn_core::checkpoint::read_checkpoint(&seed_dir.join(format!("resume/opt_{block:03}.ckpt")))?;
    learner.load_optimizer_records(&records)?;
    let _ = agent;
    Ok(learner)
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(line)
                .map_err(|e| HarnessError::Config(format!("bad eval record: {e}")))?,
        );
    }
    Ok(out)
}
