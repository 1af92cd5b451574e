//! Per-domain upper-bound reference: an independent single-task run per
//! domain, trained until the moving-average success plateaus or the budget
//! runs out.

use std::path::Path;
use std::sync::Arc;

use clear_learner::ClearLearner;
use nn_core::rng::stream;
use policies::{build_agent, ArchKind, DecodeMode};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::rollout::run_episode;
use crate::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldResult {
    pub domain: String,
    pub dialogues_trained: u64,
    pub eval_rounds: usize,
    pub success: f64,
    pub avg_return: f64,
    pub plateaued: bool,
}

/// Trains a fresh agent on each domain alone; evaluation happens on that
/// domain every `eval.interval` dialogues. The run stops early once the
/// mean success of the last `plateau_window` rounds improves on the
/// previous window by less than `plateau_epsilon`. The reported metric is
/// the mean over the final window.
pub fn run_gold(
    cfg: &RunConfig,
    arch: ArchKind,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<Vec<GoldResult>, HarnessError> {
    cfg.validate()?;
    let ontology = Arc::new(cfg.load_ontology()?);
    let mut results = Vec::new();

    for (di, domain) in ontology.domain_names().enumerate() {
        let domain = domain.to_string();
        let allowed = vec![domain.clone()];
        let mut init_rng = stream(seed, "gold-init", &[di as u64]);
        let mut agent = build_agent::<f64>(arch, ontology.clone(), cfg.model.clone(), &mut init_rng)?;
        let mut learner = ClearLearner::new(cfg.learner.clone(), seed ^ (di as u64 + 1))?;

        let window = cfg.gold.plateau_window.max(1);
        let mut success_hist: Vec<f64> = Vec::new();
        let mut return_hist: Vec<f64> = Vec::new();
        let mut plateaued = false;
        let mut trained = 0u64;

        let eval = |agent: &dyn policies::Agent<f64>, round: u64| -> Result<(f64, f64), HarnessError> {
            let mut s = 0.0;
            let mut r = 0.0;
            let n = cfg.eval.dialogues_per_domain;
            for i in 0..n {
                let ep = run_episode(
                    agent,
                    &ontology,
                    &cfg.env.env,
                    &allowed,
                    &domain,
                    i as u64,
                    stream(seed, "gold-eval-env", &[di as u64, round, i as u64]),
                    stream(seed, "gold-eval-pol", &[di as u64, round, i as u64]),
                    DecodeMode::Eval,
                )?;
                s += ep.success as usize as f64;
                r += ep.total_return;
            }
            Ok((s / n as f64, r / n as f64))
        };

        let (s0, r0) = eval(agent.as_ref(), 0)?;
        success_hist.push(s0);
        return_hist.push(r0);

        while trained < cfg.gold.budget {
            trained += 1;
            let ep = run_episode(
                agent.as_ref(),
                &ontology,
                &cfg.env.env,
                &allowed,
                &domain,
                trained,
                stream(seed, "gold-env", &[di as u64, trained]),
                stream(seed, "gold-pol", &[di as u64, trained]),
                DecodeMode::Train,
            )?;
            learner.observe(ep, agent.as_mut())?;

            if trained % cfg.eval.interval == 0 || trained == cfg.gold.budget {
                let round = success_hist.len() as u64;
                let (s, r) = eval(agent.as_ref(), round)?;
                success_hist.push(s);
                return_hist.push(r);
                if success_hist.len() >= 2 * window {
                    let last: f64 =
                        success_hist[success_hist.len() - window..].iter().sum::<f64>() / window as f64;
                    let prev: f64 = success_hist
                        [success_hist.len() - 2 * window..success_hist.len() - window]
                        .iter()
                        .sum::<f64>()
                        / window as f64;
                    if last - prev < cfg.gold.plateau_epsilon {
                        plateaued = true;
                        break;
                    }
                }
            }
        }

        let tail = window.min(success_hist.len());
        let success = success_hist[success_hist.len() - tail..].iter().sum::<f64>() / tail as f64;
        let avg_return = return_hist[return_hist.len() - tail..].iter().sum::<f64>() / tail as f64;
        results.push(GoldResult {
            domain,
            dialogues_trained: trained,
            eval_rounds: success_hist.len(),
            success,
            avg_return,
            plateaued,
        });
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut csv = String::from("domain,dialogues_trained,eval_rounds,success,avg_return,plateaued\n");
        for r in &results {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.domain, r.dialogues_trained, r.eval_rounds, r.success, r.avg_return, r.plateaued
            ));
        }
        std::fs::write(dir.join(format!("gold_{}.csv", arch.as_str())), csv)?;
    }
    Ok(results)
}
