//! End-to-end gradient validation: action-sequence log-probs (plus entropy)
//! and critic values of all three architectures on miniature configurations.

use std::sync::Arc;

use dialogue_env::{builtin_desk3, DialogueState, UserAct};
use nn_core::rng::stream;
use policies::gradcheck::{agent_grad_check, AgentPart};
use policies::{build_agent, Agent, ArchKind, DecodeMode, ModelConfig};

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        encoder_layers: 2,
        decoder_layers: 1,
        heads: 2,
        desc_dim: 16,
        value_embed_dim: 4,
        token_embed_dim: 8,
        sem_embed_dim: 4,
        gru_layers: 2,
        mlp_layers: 2,
        max_action_tuples: 3,
        domain_gate: true,
    }
}

fn check_arch(arch: ArchKind, seed: u64) {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(seed, "gc-init", &[]);
    let mut agent = build_agent::<f64>(arch, ont.clone(), tiny_cfg(), &mut rng).unwrap();

    let mut state = DialogueState::initial(&ont);
    state.apply_user_turn(
        &ont,
        &[UserAct::inform("lodging", "area", "west"), UserAct::request("lodging", "phone")],
    );

    // a record with at least one tuple exercises every step kind
    let record = (0..50)
        .map(|k| {
            agent
                .decide(&state, DecodeMode::Train, &mut stream(seed, "gc-roll", &[k]))
                .unwrap()
        })
        .find(|r| !r.tuples.is_empty() && r.stopped)
        .expect("sampling finds a non-empty stopped sequence");

    let st = state.clone();
    let rec = record.clone();
    let policy_loss = move |agent: &dyn Agent<f64>, g: &mut nn_core::Graph<f64>| {
        let score = agent.score(g, &st, &rec).unwrap();
        let weighted_h = g.scale(score.entropy, 0.5);
        g.add(score.log_prob, weighted_h)
    };
    let mut rng = stream(seed, "gc", &[1]);
    let report =
        agent_grad_check(agent.as_mut(), AgentPart::Policy, &policy_loss, 1e-5, 300, &mut rng)
            .unwrap();
    assert!(
        report.max_rel_err < 1e-4,
        "{arch:?} policy: rel err {} at {:?}",
        report.max_rel_err,
        report.worst
    );

    let st = state.clone();
    let critic_loss = move |agent: &dyn Agent<f64>, g: &mut nn_core::Graph<f64>| {
        agent.critic_value(g, &st)
    };
    let mut rng = stream(seed, "gc", &[2]);
    let report =
        agent_grad_check(agent.as_mut(), AgentPart::Critic, &critic_loss, 1e-5, 300, &mut rng)
            .unwrap();
    assert!(
        report.max_rel_err < 1e-4,
        "{arch:?} critic: rel err {} at {:?}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn ddpt_log_prob_and_critic_match_finite_differences() {
    check_arch(ArchKind::Ddpt, 31);
}

#[test]
fn bin_log_prob_and_critic_match_finite_differences() {
    check_arch(ArchKind::Bin, 32);
}

#[test]
fn sem_log_prob_and_critic_match_finite_differences() {
    check_arch(ArchKind::Sem, 33);
}
