//! Terminal debugging REPL: a human plays the user side with semantic acts
//! while the loaded policy answers with action tuples.
//!
//! Input grammar, one act per line (or several separated by `;`):
//!
//! ```text
//! <domain> inform <slot> <value>
//! <domain> request <slot>
//! bye
//! ```

use std::io::{BufRead, Write};

use dialogue_env::{
    apply_system_acts, evaluate_success, sample_goal, DialogueRecord, DialogueState, EnvConfig,
    Ontology, UserAct, UserIntent,
};
use nn_core::rng::stream;
use policies::{Agent, DecodeMode};

use crate::HarnessError;

const GRAMMAR_HINT: &str =
    "expected: '<domain> inform <slot> <value>' | '<domain> request <slot>' | 'bye'";

fn parse_act(ontology: &Ontology, line: &str) -> Result<UserAct, String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() == 1 && parts[0] == "bye" {
        return Ok(UserAct::bye());
    }
    if parts.len() < 3 {
        return Err(format!("too few words; {GRAMMAR_HINT}"));
    }
    let domain = parts[0];
    if !ontology.has_domain(domain) {
        return Err(format!(
            "unknown domain {:?}; valid domains: {}",
            domain,
            ontology.domain_names().collect::<Vec<_>>().join(", ")
        ));
    }
    let intent = UserIntent::parse(parts[1])
        .ok_or_else(|| format!("unknown intent {:?}; user intents: inform, request, bye", parts[1]))?;
    let slot = parts[2];
    let schema = ontology.domain(domain).expect("checked");
    match intent {
        UserIntent::Inform => {
            if parts.len() < 4 {
                return Err(format!("inform needs a value; {GRAMMAR_HINT}"));
            }
            if !schema.has_informable(slot) {
                return Err(format!(
                    "slot {:?} is not informable in {domain}; informables: {}",
                    slot,
                    schema.informable_names().collect::<Vec<_>>().join(", ")
                ));
            }
            Ok(UserAct::inform(domain, slot, &parts[3..].join(" ")))
        }
        UserIntent::Request => {
            if !schema.has_requestable(slot) {
                return Err(format!(
                    "slot {:?} is not requestable in {domain}; requestables: {}",
                    slot,
                    schema.requestable.join(", ")
                ));
            }
            Ok(UserAct::request(domain, slot))
        }
        UserIntent::Bye => Ok(UserAct::bye()),
    }
}

/// Runs the REPL until `bye`, end of input or the turn limit; returns the
/// success judgment against the sampled goal.
pub fn chat_loop<R: BufRead, W: Write>(
    agent: &dyn Agent<f64>,
    env_cfg: &EnvConfig,
    goal_seed: u64,
    input: R,
    mut out: W,
) -> Result<bool, HarnessError> {
    let ontology = agent.ontology().clone();
    let all: Vec<String> = ontology.domain_names().map(str::to_string).collect();
    let mut goal_rng = stream(goal_seed, "chat-goal", &[]);
    let goal = sample_goal(&ontology, &all, env_cfg, &mut goal_rng)?;

    writeln!(out, "your mission:")?;
    for dg in &goal.domains {
        let cons: Vec<String> = dg.constraints.iter().map(|(s, v)| format!("{s}={v}")).collect();
        let reqs: Vec<String> = dg.requests.iter().cloned().collect();
        writeln!(
            out,
            "  {}: constraints [{}], find out [{}]{}",
            dg.domain,
            cons.join(", "),
            reqs.join(", "),
            if dg.needs_booking { ", then book it" } else { "" }
        )?;
    }
    writeln!(out, "one act per line ({GRAMMAR_HINT}); 'bye' ends the dialogue")?;

    let mut state = DialogueState::initial(&ontology);
    let mut record = DialogueRecord::default();
    let mut pol_rng = stream(goal_seed, "chat-pol", &[]);
    let mut lines = input.lines();

    loop {
        write!(out, "user> ")?;
        out.flush()?;
        let Some(line) = lines.next() else { break };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut acts = Vec::new();
        let mut bad = false;
        for part in line.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match parse_act(&ontology, part) {
                Ok(act) => acts.push(act),
                Err(msg) => {
                    writeln!(out, "  ! {msg}")?;
                    bad = true;
                    break;
                }
            }
        }
        if bad || acts.is_empty() {
            continue;
        }
        let said_bye = acts.iter().any(|a| a.intent == UserIntent::Bye);
        state.apply_user_turn(&ontology, &acts);
        if said_bye {
            break;
        }

        let decision = agent.decide(&state, DecodeMode::Eval, &mut pol_rng)?;
        let sys_acts = agent.vocab().to_sys_acts(&decision.tuples);
        apply_system_acts(&ontology, &mut state, &mut record, &sys_acts);
        state.last_sys_acts = sys_acts.clone();
        state.turn += 1;

        if sys_acts.is_empty() {
            writeln!(out, "system: (none)")?;
        } else {
            for act in &sys_acts {
                let value = record
                    .informed
                    .get(&act.domain)
                    .and_then(|m| m.get(&act.slot))
                    .filter(|_| act.intent == dialogue_env::SysIntent::Inform)
                    .map(|v| format!(" = {v}"))
                    .unwrap_or_default();
                writeln!(out, "system: {act}{value}")?;
            }
        }
        let db: Vec<String> =
            state.db_counts.iter().map(|(d, c)| format!("{d}:{c}")).collect();
        let booked: Vec<&String> =
            state.booked.iter().filter(|(_, &b)| b).map(|(d, _)| d).collect();
        writeln!(
            out,
            "state: turn {} | active {:?} | db [{}] | booked {:?}",
            state.turn,
            state.active_domains.iter().collect::<Vec<_>>(),
            db.join(", "),
            booked
        )?;
        if state.turn >= env_cfg.max_turns {
            writeln!(out, "turn limit reached")?;
            break;
        }
    }

    let success = evaluate_success(&ontology, &goal, &state, &record);
    writeln!(out, "dialogue {}", if success { "successful" } else { "failed" })?;
    Ok(success)
}
