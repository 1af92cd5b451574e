//! Experiment configuration: TOML with strict key checking, covering the
//! environment, task schedule, model dimensions, learner settings and
//! evaluation cadence.

use std::path::Path;

use clear_learner::ClearConfig;
use dialogue_env::{EnvConfig, Ontology};
use policies::{ArchKind, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub architecture: String,
    pub seeds: Vec<u64>,
    /// `easy-to-hard`, `hard-to-easy` or `mixed`.
    pub order: String,
    pub cycles: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            architecture: "ddpt".into(),
            seeds: vec![11, 12, 13],
            order: "easy-to-hard".into(),
            cycles: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// `builtin:desk3`, `builtin:full5` or a JSON file path.
    pub ontology: String,
    #[serde(flatten)]
    pub env: EnvConfig,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { ontology: "builtin:full5".into(), env: EnvConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// Per-domain budget overrides; unlisted domains use the defaults below.
    pub budgets: std::collections::BTreeMap<String, u64>,
    /// Default budget for bookable ("hard") domains.
    pub default_hard_budget: u64,
    /// Default budget for non-bookable ("easy") domains.
    pub default_easy_budget: u64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            budgets: Default::default(),
            default_hard_budget: 2000,
            default_easy_budget: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Training dialogues between evaluation rounds.
    pub interval: u64,
    pub dialogues_per_domain: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { interval: 500, dialogues_per_domain: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GoldSection {
    pub budget: u64,
    /// Plateau detection: compare means of the last two windows of this
    /// many evaluation rounds.
    pub plateau_window: usize,
    pub plateau_epsilon: f64,
}

impl Default for GoldSection {
    fn default() -> Self {
        Self { budget: 4000, plateau_window: 10, plateau_epsilon: 0.01 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvSection,
    pub schedule: ScheduleSection,
    pub model: ModelConfig,
    pub learner: ClearConfig,
    pub eval: EvalSection,
    pub gold: GoldSection,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| HarnessError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.arch()?;
        if self.run.cycles < 1 {
            return Err(HarnessError::Config("cycles must be at least 1".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed required".into()));
        }
        if self.eval.interval < 1 || self.eval.dialogues_per_domain < 1 {
            return Err(HarnessError::Config("evaluation cadence must be positive".into()));
        }
        self.env.env.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.learner.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        order_names()
            .contains(&self.run.order.as_str())
            .then_some(())
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "unknown order {:?}; valid: {:?}",
                    self.run.order,
                    order_names()
                ))
            })?;
        Ok(())
    }

    pub fn arch(&self) -> Result<ArchKind, HarnessError> {
        ArchKind::parse(&self.run.architecture).ok_or_else(|| {
            HarnessError::Config(format!(
                "unknown architecture {:?}; valid: bin, sem, ddpt",
                self.run.architecture
            ))
        })
    }

    pub fn load_ontology(&self) -> Result<Ontology, HarnessError> {
        dialogue_env::load_ontology(&self.env.ontology)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn budget_for(&self, ontology: &Ontology, domain: &str) -> u64 {
        if let Some(&b) = self.schedule.budgets.get(domain) {
            return b;
        }
        let hard = ontology.domain(domain).map(|d| d.bookable).unwrap_or(false);
        if hard {
            self.schedule.default_hard_budget
        } else {
            self.schedule.default_easy_budget
        }
    }
}

pub fn order_names() -> [&'static str; 3] {
    ["easy-to-hard", "hard-to-easy", "mixed"]
}

/// Domain order preset over an ontology. Hard = bookable. `mixed`
/// interleaves hard and easy starting with a hard domain.
pub fn domain_order(ontology: &Ontology, order: &str) -> Result<Vec<String>, HarnessError> {
    let easy: Vec<String> = ontology
        .domains
        .iter()
        .filter(|d| !d.bookable)
        .map(|d| d.name.clone())
        .collect();
    let hard: Vec<String> = ontology
        .domains
        .iter()
        .filter(|d| d.bookable)
        .map(|d| d.name.clone())
        .collect();
    match order {
        "easy-to-hard" => Ok(easy.into_iter().chain(hard).collect()),
        "hard-to-easy" => Ok(hard.into_iter().chain(easy).collect()),
        "mixed" => {
            let mut out = Vec::with_capacity(easy.len() + hard.len());
            let (mut h, mut e) = (hard.into_iter(), easy.into_iter());
            loop {
                match (h.next(), e.next()) {
                    (None, None) => break,
                    (a, b) => {
                        out.extend(a);
                        out.extend(b);
                    }
                }
            }
            Ok(out)
        }
        other => Err(HarnessError::Config(format!(
            "unknown order {other:?}; valid: {:?}",
            order_names()
        ))),
    }
}

/// The full task sequence: the ordered domains repeated over the cycles,
/// with per-task budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub tasks: Vec<ScheduledTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub domain: String,
    pub budget: u64,
}

impl TaskSchedule {
    pub fn build(cfg: &RunConfig, ontology: &Ontology) -> Result<Self, HarnessError> {
        let order = domain_order(ontology, &cfg.run.order)?;
        let mut tasks = Vec::with_capacity(order.len() * cfg.run.cycles);
        for _ in 0..cfg.run.cycles {
            for d in &order {
                let budget = cfg.budget_for(ontology, d);
                if budget < 1 {
                    return Err(HarnessError::Config(format!("budget for {d} must be >= 1")));
                }
                tasks.push(ScheduledTask { domain: d.clone(), budget });
            }
        }
        Ok(Self { tasks })
    }

    pub fn total_dialogues(&self) -> u64 {
        self.tasks.iter().map(|t| t.budget).sum()
    }

    /// Cumulative dialogue counts at boundaries; index 0 is the start (0
    /// dialogues), index j the end of block j.
    pub fn boundaries(&self) -> Vec<u64> {
        let mut out = vec![0];
        let mut acc = 0;
        for t in &self.tasks {
            acc += t.budget;
            out.push(acc);
        }
        out
    }

    /// First block (1-based) that trains the domain, if any.
    pub fn first_trained(&self, domain: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.domain == domain).map(|i| i + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.eval.interval, 500);
        assert_eq!(cfg.eval.dialogues_per_domain, 100);
        let ont = dialogue_env::builtin_full5();
        let schedule = TaskSchedule::build(&cfg, &ont).unwrap();
        // 3 hard domains at 2000 + 2 easy at 1000, two cycles = 16000
        assert_eq!(schedule.total_dialogues(), 16_000);
        assert_eq!(schedule.tasks.len(), 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("[run]\nbanana = 3\n").unwrap_err();
        assert!(err.to_string().contains("banana"), "{err}");
        let err = RunConfig::from_toml_str("[nonsense]\n").unwrap_err();
        assert!(err.to_string().contains("nonsense"), "{err}");
    }

    #[test]
    fn order_presets() {
        let ont = dialogue_env::builtin_full5();
        let e2h = domain_order(&ont, "easy-to-hard").unwrap();
        assert_eq!(e2h, ["museum", "cab", "lodging", "bistro", "shuttle"]);
        let h2e = domain_order(&ont, "hard-to-easy").unwrap();
        assert_eq!(h2e, ["lodging", "bistro", "shuttle", "museum", "cab"]);
        let mixed = domain_order(&ont, "mixed").unwrap();
        assert_eq!(mixed, ["lodging", "museum", "bistro", "cab", "shuttle"]);
        assert!(domain_order(&ont, "sideways").is_err());
    }

    #[test]
    fn toml_roundtrip_and_boundaries() {
        let cfg = RunConfig::default();
        let s = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(cfg, back);

        let ont = dialogue_env::builtin_desk3();
        let mut cfg = RunConfig::default();
        cfg.schedule.default_hard_budget = 300;
        cfg.schedule.default_easy_budget = 300;
        let schedule = TaskSchedule::build(&cfg, &ont).unwrap();
        assert_eq!(schedule.total_dialogues(), 1800);
        assert_eq!(schedule.boundaries(), vec![0, 300, 600, 900, 1200, 1500, 1800]);
        assert_eq!(schedule.first_trained("museum"), Some(1));
        assert_eq!(schedule.first_trained("lodging"), Some(3));
    }
}
