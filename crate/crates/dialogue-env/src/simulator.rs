//! Agenda-driven rule user simulator.
//!
//! Per turn, in order:
//! 1. answer every system request whose slot is a goal constraint;
//! 2. register system informs of requested slots and booking confirmations;
//! 3. if every goal domain is complete (requests answered, booking confirmed
//!    where needed), say bye;
//! 4. otherwise, if nothing was said yet, work the first incomplete goal
//!    domain: convey 1-2 fresh constraints, then issue 1-2 requests, then
//!    (when only the booking is outstanding) restate a conveyed constraint.
//!
//! The simulator always produces at least one act or bye.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::acts::{SysAct, SysIntent, UserAct};
use crate::goal::UserGoal;

#[derive(Debug, Clone)]
pub struct UserSimulator {
    goal: UserGoal,
    conveyed: BTreeMap<String, BTreeSet<String>>,
    answered: BTreeMap<String, BTreeSet<String>>,
    booking_confirmed: BTreeSet<String>,
}

impl UserSimulator {
    pub fn new(goal: UserGoal) -> Self {
        let conveyed = goal.domains.iter().map(|d| (d.domain.clone(), BTreeSet::new())).collect();
        let answered = goal.domains.iter().map(|d| (d.domain.clone(), BTreeSet::new())).collect();
        Self { goal, conveyed, answered, booking_confirmed: BTreeSet::new() }
    }

    pub fn goal(&self) -> &UserGoal {
        &self.goal
    }

    fn domain_complete(&self, domain: &str) -> bool {
        let Some(dg) = self.goal.domain(domain) else { return true };
        let answered = &self.answered[domain];
        dg.requests.iter().all(|r| answered.contains(r))
            && (!dg.needs_booking || self.booking_confirmed.contains(domain))
    }

    fn all_complete(&self) -> bool {
        self.goal.domains.iter().all(|d| self.domain_complete(&d.domain))
    }

    /// One user turn given the system's last acts. Returns the user acts and
    /// whether the user ended the dialogue.
    pub fn step(&mut self, last_sys_acts: &[SysAct], rng: &mut ChaCha8Rng) -> (Vec<UserAct>, bool) {
        let mut acts: Vec<UserAct> = Vec::new();

        for sys in last_sys_acts {
            let Some(dg) = self.goal.domain(&sys.domain) else { continue };
            match sys.intent {
                SysIntent::Request => {
                    if let Some(value) = dg.constraints.get(&sys.slot) {
                        acts.push(UserAct::inform(&sys.domain, &sys.slot, value));
                        self.conveyed.get_mut(&sys.domain).unwrap().insert(sys.slot.clone());
                    }
                }
                SysIntent::Inform => {
                    if dg.requests.contains(&sys.slot) {
                        self.answered.get_mut(&sys.domain).unwrap().insert(sys.slot.clone());
                    }
                }
                SysIntent::Book => {
                    self.booking_confirmed.insert(sys.domain.clone());
                }
                SysIntent::Nooffer => {}
            }
        }

        if self.all_complete() {
            return (vec![UserAct::bye()], true);
        }

        if acts.is_empty() {
            let work = self
                .goal
                .domains
                .iter()
                .find(|d| !self.domain_complete(&d.domain))
                .expect("not all complete")
                .clone();
            let conveyed = self.conveyed.get_mut(&work.domain).unwrap();
            let fresh: Vec<&String> =
                work.constraints.keys().filter(|s| !conveyed.contains(*s)).collect();
            if !fresh.is_empty() {
                let mut fresh: Vec<String> = fresh.into_iter().cloned().collect();
                fresh.shuffle(rng);
                let n = rng.gen_range(1..=2.min(fresh.len()));
                for slot in fresh.into_iter().take(n) {
                    acts.push(UserAct::inform(&work.domain, &slot, &work.constraints[&slot]));
                    conveyed.insert(slot);
                }
            } else {
                let answered = &self.answered[&work.domain];
                let open: Vec<String> =
                    work.requests.iter().filter(|r| !answered.contains(*r)).cloned().collect();
                if !open.is_empty() {
                    let mut open = open;
                    open.shuffle(rng);
                    let n = rng.gen_range(1..=2.min(open.len()));
                    for slot in open.into_iter().take(n) {
                        acts.push(UserAct::request(&work.domain, &slot));
                    }
                } else {
                    // waiting on the booking; restate a conveyed constraint
                    let conveyed: Vec<&String> = self.conveyed[&work.domain].iter().collect();
                    let slot = conveyed
                        .choose(rng)
                        .map(|s| (*s).clone())
                        .or_else(|| work.constraints.keys().next().cloned())
                        .expect("goal domains carry at least one constraint");
                    acts.push(UserAct::inform(&work.domain, &slot, &work.constraints[&slot]));
                }
            }
        }

        debug_assert!(!acts.is_empty(), "simulator must emit at least one act");
        (acts, false)
    }
}
