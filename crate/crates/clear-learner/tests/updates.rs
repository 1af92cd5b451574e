//! Learner-level behavior: batch composition, regularizer zeroing when the
//! policy has not moved, reported losses under zero learning rates, and the
//! hand-checked advantage arithmetic.

use std::sync::Arc;

use clear_learner::{advantages, ClearConfig, ClearLearner, Episode, Transition};
use dialogue_env::{builtin_desk3, DialogueEnv, EnvConfig};
use nn_core::rng::stream;
use policies::{build_agent, Agent, ArchKind, DecodeMode, ModelConfig};

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 2,
        desc_dim: 16,
        value_embed_dim: 4,
        token_embed_dim: 8,
        sem_embed_dim: 4,
        gru_layers: 1,
        mlp_layers: 2,
        max_action_tuples: 2,
        domain_gate: true,
    }
}

fn rollout(agent: &dyn Agent<f64>, ont: &dialogue_env::Ontology, idx: u64) -> Episode {
    let allowed = vec!["museum".to_string()];
    let mut env = DialogueEnv::reset(
        ont,
        EnvConfig { max_turns: 6, ..Default::default() },
        &allowed,
        stream(100, "env", &[idx]),
    )
    .unwrap();
    let mut rng = stream(100, "pol", &[idx]);
    let mut transitions = Vec::new();
    loop {
        let state = env.state().clone();
        let record = agent.decide(&state, DecodeMode::Train, &mut rng).unwrap();
        let value = agent.behavior_value(&state);
        let acts = agent.vocab().to_sys_acts(&record.tuples);
        let out = env.step(&acts).unwrap();
        transitions.push(Transition {
            state,
            action: record,
            reward: out.reward,
            value,
            done: out.done,
        });
        if out.done {
            return Episode {
                transitions,
                task: "museum".into(),
                dialogue_index: idx,
                success: out.success.unwrap_or(false),
                total_return: env.record().total_return,
            };
        }
    }
}

#[test]
fn online_offline_split_is_13_51_at_defaults() {
    let cfg = ClearConfig::default();
    assert_eq!(cfg.batch_episodes, 64);
    assert_eq!(cfg.online_count(), 13);
    assert_eq!(cfg.batch_episodes - cfg.online_count(), 51);
    assert_eq!(cfg.update_every, 2);
    assert_eq!(cfg.buffer_capacity, 5000);
    assert_eq!((cfg.value_reg_weight, cfg.policy_reg_weight, cfg.entropy_weight), (0.1, 0.1, 0.01));
    assert_eq!((cfg.policy_lr, cfg.critic_lr), (5e-5, 1e-4));
}

#[test]
fn hand_checked_advantage_and_actor_arithmetic() {
    // one transition: r = 1, gamma = 0.9, v_1 = 2, V(s_0) = 0.5
    // A = 1 + 1.8 - 0.5 = 2.3; with ratio 1 and log pi = -1.0 the actor
    // term is -(1 * 2.3 * -1.0) = 2.3
    let adv = advantages(&[1.0], &[0.5], &[9.9], 2.0, 0.9);
    assert!((adv[0] - 2.3).abs() < 1e-12);
    let ratio: f64 = 1.0;
    let log_pi = -1.0;
    let actor = -ratio.min(1.0) * adv[0] * log_pi;
    assert!((actor - 2.3).abs() < 1e-12);
}

#[test]
fn unmoved_policy_has_zero_regularizers() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(1, "init", &[]);
    let mut agent = build_agent::<f64>(ArchKind::Ddpt, ont.clone(), tiny_cfg(), &mut rng).unwrap();

    let cfg = ClearConfig {
        batch_episodes: 4,
        update_every: 100,
        buffer_capacity: 100,
        ..Default::default()
    };
    let mut learner = ClearLearner::new(cfg, 5).unwrap();
    for i in 0..6 {
        let ep = rollout(agent.as_ref(), &ont, i);
        learner.observe(ep, agent.as_mut()).unwrap();
    }
    // parameters have not changed since the rollouts, so pi == mu and the
    // critic still predicts its recorded values
    let m = learner.update(agent.as_mut()).unwrap();
    assert!(m.online_episodes >= 1 && m.offline_episodes >= 1);
    assert_eq!(m.value_reg, 0.0, "value regularizer must vanish when V == V_replay");
    assert_eq!(m.policy_reg, 0.0, "KL regularizer must vanish when pi == mu");
    assert_eq!(m.clamp_events, 0);
    assert!(m.entropy > 0.0);
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged_but_report_losses() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(2, "init", &[]);
    let mut agent = build_agent::<f64>(ArchKind::Bin, ont.clone(), tiny_cfg(), &mut rng).unwrap();

    let cfg = ClearConfig {
        batch_episodes: 4,
        update_every: 2,
        buffer_capacity: 100,
        policy_lr: 0.0,
        critic_lr: 0.0,
        ..Default::default()
    };
    let mut learner = ClearLearner::new(cfg, 6).unwrap();

    let before: Vec<(String, Vec<f64>)> = agent
        .policy_store()
        .iter()
        .chain(agent.critic_store().iter())
        .map(|e| (e.name.clone(), e.value.as_slice().to_vec()))
        .collect();

    let mut metrics = None;
    for i in 0..2 {
        let ep = rollout(agent.as_ref(), &ont, 50 + i);
        metrics = learner.observe(ep, agent.as_mut()).unwrap().or(metrics);
    }
    let m = metrics.expect("update fires after two dialogues");
    assert!(m.critic_loss.is_finite() && m.actor_loss.is_finite());
    assert!(m.critic_loss != 0.0);

    let after: Vec<(String, Vec<f64>)> = agent
        .policy_store()
        .iter()
        .chain(agent.critic_store().iter())
        .map(|e| (e.name.clone(), e.value.as_slice().to_vec()))
        .collect();
    assert_eq!(before, after, "zero learning rate must not move parameters");
}

#[test]
fn updates_fire_every_second_dialogue_and_learning_moves_parameters() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(3, "init", &[]);
    let mut agent = build_agent::<f64>(ArchKind::Ddpt, ont.clone(), tiny_cfg(), &mut rng).unwrap();
    let cfg = ClearConfig {
        batch_episodes: 4,
        buffer_capacity: 100,
        policy_lr: 1e-3,
        critic_lr: 1e-3,
        ..Default::default()
    };
    let mut learner = ClearLearner::new(cfg, 7).unwrap();
    let before: Vec<f64> = agent.policy_store().get("gate.w").as_slice().to_vec();

    let mut fired = Vec::new();
    for i in 0..6 {
        let ep = rollout(agent.as_ref(), &ont, 200 + i);
        fired.push(learner.observe(ep, agent.as_mut()).unwrap().is_some());
    }
    assert_eq!(fired, vec![false, true, false, true, false, true]);
    assert_eq!(learner.updates, 3);
    let after: Vec<f64> = agent.policy_store().get("gate.w").as_slice().to_vec();
    assert_ne!(before, after, "training should move the gate parameters");

    // finite losses and behavior-value consistency after training
    let ep = rollout(agent.as_ref(), &ont, 999);
    assert!(ep.transitions.iter().all(|t| t.value.is_finite()));
}

#[test]
fn snapshot_restore_roundtrips_learner_state() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(4, "init", &[]);
    let mut agent = build_agent::<f64>(ArchKind::Sem, ont.clone(), tiny_cfg(), &mut rng).unwrap();
    let cfg = ClearConfig { batch_episodes: 4, buffer_capacity: 10, ..Default::default() };
    let mut learner = ClearLearner::new(cfg.clone(), 8).unwrap();
    for i in 0..4 {
        let ep = rollout(agent.as_ref(), &ont, 300 + i);
        learner.observe(ep, agent.as_mut()).unwrap();
    }
    let snap = learner.snapshot();
    let json = serde_json::to_string(&snap).unwrap();
    let back: clear_learner::LearnerSnapshot = serde_json::from_str(&json).unwrap();
    let opt_records = learner.optimizer_records(agent.as_ref());
    let mut restored = ClearLearner::<f64>::restore(
        cfg,
        8,
        back,
        nn_core::AdamState::new(5e-5),
        nn_core::AdamState::new(1e-4),
    )
    .unwrap();
    restored.load_optimizer_records(&opt_records).unwrap();
    assert_eq!(restored.buffer.len(), learner.buffer.len());
    assert_eq!(restored.buffer.total_seen(), learner.buffer.total_seen());
    assert_eq!(restored.updates, learner.updates);
}
