//! Environment dynamics: system act effects, reward with information
//! overload, action legality, termination and success evaluation.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acts::{SysAct, SysIntent, UserAct, NO_SLOT};
use crate::goal::{sample_goal, UserGoal};
use crate::ontology::{Entity, Ontology};
use crate::simulator::UserSimulator;
use crate::state::DialogueState;
use crate::EnvError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub max_turns: usize,
    /// Information-overload penalty per emitted action tuple.
    pub info_overload_rho: f64,
    pub success_reward: f64,
    pub failure_reward: f64,
    /// Probability of a two-domain goal when more than one domain is allowed.
    pub two_domain_prob: f64,
    pub max_goal_constraints: usize,
    pub max_goal_requests: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_turns: 20,
            info_overload_rho: 3.0,
            success_reward: 80.0,
            failure_reward: -40.0,
            two_domain_prob: 0.3,
            max_goal_constraints: 2,
            max_goal_requests: 2,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.max_turns < 2 {
            return Err(EnvError::InvalidConfig("max_turns must be at least 2".into()));
        }
        if self.info_overload_rho < 0.0 {
            return Err(EnvError::InvalidConfig("info_overload_rho must be >= 0".into()));
        }
        Ok(())
    }
}

/// Is `(intent, slot)` legal for `domain` in `state`? Legality is shared by
/// all policy architectures. The rules:
/// - `nooffer` is forbidden while matching entities exist;
/// - `inform` is forbidden when no entity matches;
/// - `book` is forbidden for non-bookable domains;
/// - slots must fit the intent (informables for `request`, informed slots for
///   `inform`, the `none` sentinel for `book`/`nooffer`).
pub fn intent_legal(ontology: &Ontology, state: &DialogueState, domain: &str, intent: SysIntent) -> bool {
    let Ok(schema) = ontology.domain(domain) else { return false };
    let db = state.db_count(domain);
    match intent {
        SysIntent::Inform => db > 0,
        SysIntent::Request => true,
        SysIntent::Book => schema.bookable,
        SysIntent::Nooffer => db == 0,
    }
}

pub fn slot_legal(ontology: &Ontology, domain: &str, intent: SysIntent, slot: &str) -> bool {
    let Ok(schema) = ontology.domain(domain) else { return false };
    match intent {
        SysIntent::Inform => schema.informed_slots().contains(&slot),
        SysIntent::Request => schema.has_informable(slot),
        SysIntent::Book | SysIntent::Nooffer => slot == NO_SLOT,
    }
}

/// Forbidden `(intent, slot)` pairs for a domain in a state, enumerated over
/// the domain's own tuple space.
pub fn action_mask(
    ontology: &Ontology,
    state: &DialogueState,
    domain: &str,
) -> Result<Vec<(SysIntent, String)>, EnvError> {
    let schema = ontology.domain(domain)?;
    let mut slots: Vec<String> = schema.informed_slots().iter().map(|s| s.to_string()).collect();
    slots.push(NO_SLOT.to_string());
    let mut forbidden = Vec::new();
    for intent in SysIntent::ALL {
        for slot in &slots {
            if !(intent_legal(ontology, state, domain, intent)
                && slot_legal(ontology, domain, intent, slot))
            {
                forbidden.push((intent, slot.clone()));
            }
        }
    }
    Ok(forbidden)
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TurnRecord {
    pub turn: usize,
    pub user_acts: Vec<UserAct>,
    pub sys_acts: Vec<SysAct>,
    pub reward: f64,
}

/// Everything needed to judge a finished dialogue.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DialogueRecord {
    pub turns: Vec<TurnRecord>,
    /// domain -> slot -> last informed value.
    pub informed: BTreeMap<String, BTreeMap<String, String>>,
    /// domain -> entity snapshot taken when the booking was made.
    pub booked_entities: BTreeMap<String, Entity>,
    pub success: Option<bool>,
    pub total_return: f64,
}

/// True iff every requested slot of every goal domain was informed with a
/// value consistent with some entity matching the final constraints, and
/// every booking-needing goal domain holds a booked entity that satisfies the
/// final constraints.
pub fn evaluate_success(
    ontology: &Ontology,
    goal: &UserGoal,
    state: &DialogueState,
    record: &DialogueRecord,
) -> bool {
    for dg in &goal.domains {
        let constraints = state.domain_constraints(&dg.domain);
        let Ok((_, matching)) = ontology.db_query(&dg.domain, &constraints) else {
            return false;
        };
        if matching.is_empty() {
            return false;
        }
        for slot in &dg.requests {
            let Some(value) = record.informed.get(&dg.domain).and_then(|m| m.get(slot)) else {
                return false;
            };
            if !matching.iter().any(|e| e.get(slot) == Some(value)) {
                return false;
            }
        }
        if dg.needs_booking {
            if !state.is_booked(&dg.domain) {
                return false;
            }
            let Some(entity) = record.booked_entities.get(&dg.domain) else {
                return false;
            };
            if !constraints.iter().all(|(s, v)| entity.get(s) == Some(v)) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// Set exactly when `done`.
    pub success: Option<bool>,
}

/// A single dialogue between the simulated user and the system policy.
/// `reset` samples a goal and plays the opening user turn; `step` applies
/// one system action sequence and advances the user.
#[derive(Debug, Clone)]
pub struct DialogueEnv<'a> {
    ontology: &'a Ontology,
    cfg: EnvConfig,
    sim: UserSimulator,
    state: DialogueState,
    record: DialogueRecord,
    rng: ChaCha8Rng,
    done: bool,
}

impl<'a> DialogueEnv<'a> {
    pub fn reset(
        ontology: &'a Ontology,
        cfg: EnvConfig,
        allowed_domains: &[String],
        mut rng: ChaCha8Rng,
    ) -> Result<Self, EnvError> {
        cfg.validate()?;
        let goal = sample_goal(ontology, allowed_domains, &cfg, &mut rng)?;
        Self::with_goal(ontology, cfg, goal, rng)
    }

    pub fn with_goal(
        ontology: &'a Ontology,
        cfg: EnvConfig,
        goal: UserGoal,
        mut rng: ChaCha8Rng,
    ) -> Result<Self, EnvError> {
        cfg.validate()?;
        let mut sim = UserSimulator::new(goal);
        let mut state = DialogueState::initial(ontology);
        let (acts, _) = sim.step(&[], &mut rng);
        state.apply_user_turn(ontology, &acts);
        let mut record = DialogueRecord::default();
        record.turns.push(TurnRecord { turn: 0, user_acts: acts, ..Default::default() });
        Ok(Self { ontology, cfg, sim, state, record, rng, done: false })
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }

    pub fn goal(&self) -> &UserGoal {
        self.sim.goal()
    }

    pub fn record(&self) -> &DialogueRecord {
        &self.record
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Applies the system's action tuples, then plays the user turn.
    pub fn step(&mut self, action: &[SysAct]) -> Result<StepOutcome, EnvError> {
        assert!(!self.done, "step on a finished dialogue");
        for act in action {
            self.validate_act(act)?;
        }

        let mut reward = -self.cfg.info_overload_rho * action.len() as f64;
        apply_system_acts(self.ontology, &mut self.state, &mut self.record, action);
        self.state.last_sys_acts = action.to_vec();
        self.state.turn += 1;

        let turn_idx = self.record.turns.len() - 1;
        self.record.turns[turn_idx].sys_acts = action.to_vec();
        self.record.turns[turn_idx].turn = self.state.turn;

        let (user_acts, user_done) = self.sim.step(action, &mut self.rng);
        self.state.apply_user_turn(self.ontology, &user_acts);

        let done = user_done || self.state.turn >= self.cfg.max_turns;
        let mut success = None;
        if done {
            self.done = true;
            let ok = evaluate_success(self.ontology, self.sim.goal(), &self.state, &self.record);
            reward += if ok { self.cfg.success_reward } else { self.cfg.failure_reward };
            success = Some(ok);
            self.record.success = Some(ok);
        }
        self.record.turns[turn_idx].reward = reward;
        self.record.total_return += reward;
        if !done {
            self.record
                .turns
                .push(TurnRecord { turn: self.state.turn, user_acts, ..Default::default() });
        }
        Ok(StepOutcome { reward, done, success })
    }

    fn validate_act(&self, act: &SysAct) -> Result<(), EnvError> {
        let schema = self.ontology.domain(&act.domain)?;
        let slot_ok = match act.intent {
            SysIntent::Inform => schema.informed_slots().contains(&act.slot.as_str()),
            SysIntent::Request => schema.has_informable(&act.slot),
            SysIntent::Book | SysIntent::Nooffer => act.slot == NO_SLOT,
        };
        if !slot_ok {
            return Err(EnvError::IllegalAct(format!(
                "slot {} is not usable with {} in domain {}",
                act.slot,
                act.intent.as_str(),
                act.domain
            )));
        }
        Ok(())
    }
}

/// State and record effects of the system acts. Informs answer from the top
/// matching entity; books snapshot it. Public so that the debug REPL can
/// drive the same world dynamics without a simulated user.
pub fn apply_system_acts(
    ontology: &Ontology,
    state: &mut DialogueState,
    record: &mut DialogueRecord,
    acts: &[SysAct],
) {
    for act in acts {
        let constraints = state.domain_constraints(&act.domain);
        match act.intent {
            SysIntent::Inform => {
                let (_, matching) = ontology
                    .db_query(&act.domain, &constraints)
                    .expect("validated act domain");
                if let Some(top) = matching.first() {
                    if let Some(value) = top.get(&act.slot) {
                        record
                            .informed
                            .entry(act.domain.clone())
                            .or_default()
                            .insert(act.slot.clone(), value.clone());
                    }
                }
            }
            SysIntent::Book => {
                let (_, matching) = ontology
                    .db_query(&act.domain, &constraints)
                    .expect("validated act domain");
                let bookable = ontology
                    .domain(&act.domain)
                    .map(|d| d.bookable)
                    .unwrap_or(false);
                if bookable {
                    if let Some(top) = matching.first() {
                        state.booked.insert(act.domain.clone(), true);
                        record.booked_entities.insert(act.domain.clone(), (*top).clone());
                    }
                }
            }
            SysIntent::Request | SysIntent::Nooffer => {}
        }
    }
}
