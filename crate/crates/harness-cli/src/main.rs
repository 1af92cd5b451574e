//! `cdrl`: continual dialogue-policy RL experiments.

use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use harness::{
    chat_loop, compute_fz, render_report_csv, run_gold, run_schedule_variant, EvalMatrix,
    MetricKind, RunConfig, RunVariant, TaskSchedule,
};
use policies::{load_agent_with_meta, ArchKind};

#[derive(Parser)]
#[command(name = "cdrl", about = "Continual RL for task-oriented dialogue policies", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the configured task schedule (resumes interrupted runs).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed list.
        #[arg(long)]
        seed: Vec<u64>,
        /// Overrides the config's architecture (bin, sem, ddpt).
        #[arg(long)]
        arch: Option<String>,
        /// Overrides the domain order (easy-to-hard, hard-to-easy, mixed).
        #[arg(long)]
        order: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one or all domains.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        dialogues: usize,
        /// Evaluate this domain only (default: every domain).
        #[arg(long)]
        domain: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute forgetting/forward-transfer metrics for a finished run.
    Metrics {
        #[arg(long, value_name = "DIR")]
        run_dir: PathBuf,
    },
    /// Per-domain single-task upper-bound runs.
    Gold {
        #[arg(long)]
        config: PathBuf,
        /// Architecture for the gold reference (default bin).
        #[arg(long, default_value = "bin")]
        arch: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reference run that reinitializes at every task boundary, never trains.
    RandomBaseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interactive semantic-act chat with a checkpointed policy.
    Chat {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        goal_seed: u64,
    },
}

fn apply_overrides(
    cfg: &mut RunConfig,
    seed: &[u64],
    arch: &Option<String>,
    order: &Option<String>,
) -> anyhow::Result<()> {
    if !seed.is_empty() {
        cfg.run.seeds = seed.to_vec();
    }
    if let Some(a) = arch {
        cfg.run.architecture = a.clone();
    }
    if let Some(o) = order {
        cfg.run.order = o.clone();
    }
    cfg.validate().context("invalid configuration after overrides")?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { config, seed, arch, order, out } => {
            let mut cfg = RunConfig::from_path(&config)?;
            apply_overrides(&mut cfg, &seed, &arch, &order)?;
            let artifacts = run_schedule_variant(&cfg, &out, RunVariant::Train)?;
            for a in &artifacts {
                println!("seed artifacts: {}", a.seed_dir.display());
            }
            println!("run complete: {} seeds in {}", artifacts.len(), out.display());
        }
        Command::Eval { checkpoint, dialogues, domain, seed } => {
            let (agent, _, meta) = load_agent_with_meta::<f64>(&checkpoint)?;
            let env_cfg = meta
                .pointer("/extra/env/env")
                .cloned()
                .map(serde_json::from_value)
                .transpose()?
                .unwrap_or_default();
            let ontology = agent.ontology().clone();
            let domains: Vec<String> = match domain {
                Some(d) => {
                    if !ontology.has_domain(&d) {
                        bail!(
                            "unknown domain {d}; checkpoint knows: {}",
                            ontology.domain_names().collect::<Vec<_>>().join(", ")
                        );
                    }
                    vec![d]
                }
                None => ontology.domain_names().map(str::to_string).collect(),
            };
            println!("domain,success_rate,avg_return,n_dialogues");
            for (di, d) in domains.iter().enumerate() {
                let mut s = 0.0;
                let mut r = 0.0;
                for i in 0..dialogues {
                    let ep = harness::run_episode(
                        agent.as_ref(),
                        &ontology,
                        &env_cfg,
                        &[d.clone()],
                        d,
                        i as u64,
                        nn_core::rng::stream(seed, "cli-eval-env", &[di as u64, i as u64]),
                        nn_core::rng::stream(seed, "cli-eval-pol", &[di as u64, i as u64]),
                        policies::DecodeMode::Eval,
                    )?;
                    s += ep.success as usize as f64;
                    r += ep.total_return;
                }
                println!("{d},{},{},{dialogues}", s / dialogues as f64, r / dialogues as f64);
            }
        }
        Command::Metrics { run_dir } => {
            let cfg = RunConfig::from_path(&run_dir.join("config.toml"))
                .context("run directory must contain the config copy")?;
            let ontology = cfg.load_ontology()?;
            let schedule = TaskSchedule::build(&cfg, &ontology)?;
            let matrix = EvalMatrix::load_run_dir(&run_dir)?;
            let reports = vec![
                compute_fz(&matrix, &schedule, MetricKind::Success)?,
                compute_fz(&matrix, &schedule, MetricKind::Return)?,
            ];
            let csv = render_report_csv(&reports);
            std::fs::write(run_dir.join("metrics.csv"), &csv)?;
            print!("{csv}");
            for rep in &reports {
                println!(
                    "# {}: forgetting F = {:.4}, forward transfer Z = {:.4}",
                    rep.metric.as_str(),
                    rep.forgetting,
                    rep.forward_transfer
                );
            }
        }
        Command::Gold { config, arch, out, seed } => {
            let cfg = RunConfig::from_path(&config)?;
            let arch = ArchKind::parse(&arch)
                .ok_or_else(|| anyhow::anyhow!("unknown architecture {arch}"))?;
            let results = run_gold(&cfg, arch, seed, Some(&out))?;
            println!("domain,dialogues_trained,success,avg_return,plateaued");
            for r in &results {
                println!(
                    "{},{},{},{},{}",
                    r.domain, r.dialogues_trained, r.success, r.avg_return, r.plateaued
                );
            }
        }
        Command::RandomBaseline { config, arch, out } => {
            let mut cfg = RunConfig::from_path(&config)?;
            apply_overrides(&mut cfg, &[], &arch, &None)?;
            run_schedule_variant(&cfg, &out, RunVariant::Random)?;
            let ontology = cfg.load_ontology()?;
            let schedule = TaskSchedule::build(&cfg, &ontology)?;
            let matrix = EvalMatrix::load_run_dir(&out)?;
            let rep = compute_fz(&matrix, &schedule, MetricKind::Success)?;
            let csv = render_report_csv(&[rep]);
            std::fs::write(out.join("metrics.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Chat { checkpoint, goal_seed } => {
            let (agent, _, meta) = load_agent_with_meta::<f64>(&checkpoint)?;
            let env_cfg = meta
                .pointer("/extra/env/env")
                .cloned()
                .map(serde_json::from_value)
                .transpose()?
                .unwrap_or_default();
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            chat_loop(agent.as_ref(), &env_cfg, goal_seed, BufReader::new(stdin.lock()), stdout.lock())?;
        }
    }
    Ok(())
}
