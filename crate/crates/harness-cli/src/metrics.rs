//! Forgetting and forward-transfer metrics over the evaluation matrix.
//!
//! Let `m[i, k]` be the metric for domain `i` at task-boundary checkpoint
//! `k` (0 = before any training). For boundaries `j` after domain `i`'s
//! first training block,
//!
//! ```text
//! F[i, j] = mean over seeds of ( max_{k in 0..j} m[i, k] - m[i, j] )
//! ```
//!
//! positive values indicate forgetting, negative backward transfer. For
//! boundaries `j` strictly before domain `i` is first trained (zero-shot),
//!
//! ```text
//! Z[i, j] = mean over seeds of m[i, j]
//! ```
//!
//! `F_i`/`Z_i` average over valid `j`; `F`/`Z` average over domains. The
//! first-scheduled domain has no `Z_i` (no pre-training boundary), shown as
//! an empty cell in reports. Only task-boundary evaluations feed these
//! metrics; intermediate rounds feed learning curves.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TaskSchedule;
use crate::rollout::EvalRecord;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Success,
    Return,
}

impl MetricKind {
    pub fn of(self, r: &EvalRecord) -> f64 {
        match self {
            MetricKind::Success => r.success_rate,
            MetricKind::Return => r.avg_return,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Success => "success",
            MetricKind::Return => "return",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalMatrix {
    pub records: Vec<EvalRecord>,
}

impl EvalMatrix {
    pub fn new(records: Vec<EvalRecord>) -> Self {
        Self { records }
    }

    /// Loads every `seed_*/eval_matrix.jsonl` under a run directory.
    pub fn load_run_dir(run_dir: &Path) -> Result<Self, HarnessError> {
        let mut records = Vec::new();
        let mut seed_dirs: Vec<_> = std::fs::read_dir(run_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.is_dir()
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .map(|n| n.starts_with("seed_"))
                        .unwrap_or(false)
            })
            .collect();
        seed_dirs.sort();
        if seed_dirs.is_empty() {
            return Err(HarnessError::Config(format!(
                "no seed_* directories under {}",
                run_dir.display()
            )));
        }
        for dir in seed_dirs {
            records.extend(crate::runner::load_records(&dir.join("eval_matrix.jsonl"))?);
        }
        Ok(Self { records })
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.records.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn domains(&self) -> Vec<String> {
        let mut d: Vec<String> = self.records.iter().map(|r| r.domain.clone()).collect();
        d.sort();
        d.dedup();
        d
    }

    fn value_at(
        &self,
        seed: u64,
        dialogues: u64,
        domain: &str,
        metric: MetricKind,
    ) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.seed == seed && r.dialogues_trained == dialogues && r.domain == domain)
            .map(|r| metric.of(r))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainFz {
    pub domain: String,
    /// (boundary position j, value) pairs.
    pub f_ij: Vec<(usize, f64)>,
    pub f_i: Option<f64>,
    pub z_ij: Vec<(usize, f64)>,
    /// `None` renders as the empty cell of first-scheduled domains.
    pub z_i: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FzReport {
    pub metric: MetricKind,
    pub per_domain: Vec<DomainFz>,
    pub forgetting: f64,
    pub forward_transfer: f64,
}

/// Boundary-based forgetting and forward transfer, seed-averaged.
pub fn compute_fz(
    matrix: &EvalMatrix,
    schedule: &TaskSchedule,
    metric: MetricKind,
) -> Result<FzReport, HarnessError> {
    let seeds = matrix.seeds();
    if seeds.is_empty() {
        return Err(HarnessError::Config("evaluation matrix is empty".into()));
    }
    let boundaries = schedule.boundaries();
    let n_blocks = schedule.tasks.len();
    let domains = matrix.domains();

    // m[seed][k] per domain, with missing boundary evals rejected
    let mut per_domain = Vec::with_capacity(domains.len());
    for domain in &domains {
        let mut m: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for &seed in &seeds {
            let series: Result<Vec<f64>, HarnessError> = (0..=n_blocks)
                .map(|k| {
                    matrix
                        .value_at(seed, boundaries[k], domain, metric)
                        .ok_or_else(|| {
                            HarnessError::Config(format!(
                                "missing boundary evaluation: seed {seed}, domain {domain}, {} dialogues",
                                boundaries[k]
                            ))
                        })
                })
                .collect();
            m.insert(seed, series?);
        }
        let first = schedule.first_trained(domain);

        let mut f_ij = Vec::new();
        let mut z_ij = Vec::new();
        if let Some(ft) = first {
            for j in (ft + 1)..=n_blocks {
                let mean = seeds
                    .iter()
                    .map(|s| {
                        let series = &m[s];
                        let max_past = series[..j]
                            .iter()
                            .copied()
                            .fold(f64::NEG_INFINITY, f64::max);
                        max_past - series[j]
                    })
                    .sum::<f64>()
                    / seeds.len() as f64;
                f_ij.push((j, mean));
            }
            for j in 1..ft {
                let mean =
                    seeds.iter().map(|s| m[s][j]).sum::<f64>() / seeds.len() as f64;
                z_ij.push((j, mean));
            }
        }
        let f_i = mean_of(&f_ij);
        let z_i = mean_of(&z_ij);
        per_domain.push(DomainFz { domain: domain.clone(), f_ij, f_i, z_ij, z_i });
    }

    let forgetting = mean_opt(per_domain.iter().map(|d| d.f_i));
    let forward_transfer = mean_opt(per_domain.iter().map(|d| d.z_i));
    Ok(FzReport { metric, per_domain, forgetting, forward_transfer })
}

fn mean_of(values: &[(usize, f64)]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64)
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        f64::NAN
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Comma-separated report: one row per (metric, statistic, domain, boundary)
/// plus per-domain and overall means. Undefined cells (first-scheduled
/// domains' forward transfer) have an empty value column.
pub fn render_report_csv(reports: &[FzReport]) -> String {
    let mut out = String::from("metric,stat,domain,boundary,value\n");
    for rep in reports {
        for d in &rep.per_domain {
            for (j, v) in &d.f_ij {
                out.push_str(&format!("{},F,{},{},{}\n", rep.metric.as_str(), d.domain, j, v));
            }
            out.push_str(&format!(
                "{},F,{},mean,{}\n",
                rep.metric.as_str(),
                d.domain,
                d.f_i.map(|v| v.to_string()).unwrap_or_default()
            ));
            for (j, v) in &d.z_ij {
                out.push_str(&format!("{},Z,{},{},{}\n", rep.metric.as_str(), d.domain, j, v));
            }
            out.push_str(&format!(
                "{},Z,{},mean,{}\n",
                rep.metric.as_str(),
                d.domain,
                d.z_i.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        out.push_str(&format!("{},F,ALL,mean,{}\n", rep.metric.as_str(), rep.forgetting));
        out.push_str(&format!("{},Z,ALL,mean,{}\n", rep.metric.as_str(), rep.forward_transfer));
    }
    out
}
