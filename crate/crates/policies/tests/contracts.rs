//! Architecture contracts: masking exactness, gate arithmetic, legality,
//! parameter-count behavior under ontology growth, rescore consistency and
//! checkpoint round-trips.

use std::sync::Arc;

use dialogue_env::{builtin_desk3, builtin_full5, DialogueState, Ontology, UserAct};
use nn_core::rng::stream;
use policies::{
    build_agent, load_agent, save_agent, ActionRecord, Agent, ArchKind, DecodeMode, ModelConfig,
    StepKind, STOP_DOMAIN,
};

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
        gru_layers: 1,
        mlp_layers: 2,
        max_action_tuples: 3,
        domain_gate: true,
    }
}

/// State with lodging active (user informed area) and everything else inactive.
fn lodging_state(ont: &Ontology) -> DialogueState {
    let mut s = DialogueState::initial(ont);
    s.apply_user_turn(ont, &[UserAct::inform("lodging", "area", "west")]);
    s
}

fn record_fingerprint(r: &ActionRecord) -> String {
    format!("{:?}|{}|{:?}", r.tuples, r.log_prob, r.steps.iter().map(|s| s.probs.clone()).collect::<Vec<_>>())
}

#[test]
fn inactive_domain_perturbation_changes_nothing() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(1, "mask", &[]);
    let agent = build_agent::<f64>(ArchKind::Ddpt, ont.clone(), tiny_cfg(), &mut rng).unwrap();

    let base_state = lodging_state(&ont);
    assert!(!base_state.active_domains.contains("museum"));

    // perturb values of inactive-domain items: museum db count
    let mut perturbed = base_state.clone();
    perturbed.db_counts.insert("museum".into(), 3);
    assert_ne!(base_state.db_count("museum"), 3);

    let a = agent.decide(&base_state, DecodeMode::Train, &mut stream(7, "d", &[])).unwrap();
    let b = agent.decide(&perturbed, DecodeMode::Train, &mut stream(7, "d", &[])).unwrap();
    assert_eq!(record_fingerprint(&a), record_fingerprint(&b));

    // critic value exactly equal in 64-bit
    assert_eq!(agent.behavior_value(&base_state), agent.behavior_value(&perturbed));

    // whereas perturbing an ACTIVE domain's item does change the critic
    let mut active_perturbed = base_state.clone();
    active_perturbed.db_counts.insert("lodging".into(), 1);
    assert_ne!(
        agent.behavior_value(&base_state),
        agent.behavior_value(&active_perturbed)
    );
}

#[test]
fn rescore_reproduces_rollout_log_prob() {
    let ont = Arc::new(builtin_desk3());
    for (i, arch) in [ArchKind::Ddpt, ArchKind::Bin, ArchKind::Sem].into_iter().enumerate() {
        let mut rng = stream(2, "init", &[i as u64]);
        let agent = build_agent::<f64>(arch, ont.clone(), tiny_cfg(), &mut rng).unwrap();
        let state = lodging_state(&ont);
        for k in 0..5 {
            let rec = agent
                .decide(&state, DecodeMode::Train, &mut stream(3, "roll", &[k]))
                .unwrap();
            let mut g = nn_core::Graph::new();
            let score = agent.score(&mut g, &state, &rec).unwrap();
            assert!(
                (score.log_prob_value - rec.log_prob).abs() < 1e-9,
                "{arch:?}: rescore {} vs rollout {}",
                score.log_prob_value,
                rec.log_prob
            );
            assert!((g.scalar_value(score.log_prob) - rec.log_prob).abs() < 1e-9);
            assert_eq!(score.step_dists.len(), rec.steps.len());
        }
    }
}

#[test]
fn decode_is_deterministic_and_legal() {
    let ont = Arc::new(builtin_desk3());
    for (i, arch) in [ArchKind::Ddpt, ArchKind::Bin, ArchKind::Sem].into_iter().enumerate() {
        let mut rng = stream(4, "init", &[i as u64]);
        let agent = build_agent::<f64>(arch, ont.clone(), tiny_cfg(), &mut rng).unwrap();
        let state = lodging_state(&ont);
        let a = agent.decide(&state, DecodeMode::Eval, &mut stream(5, "e", &[])).unwrap();
        let b = agent.decide(&state, DecodeMode::Eval, &mut stream(5, "e", &[])).unwrap();
        assert_eq!(record_fingerprint(&a), record_fingerprint(&b));

        for k in 0..20 {
            let rec = agent
                .decide(&state, DecodeMode::Train, &mut stream(6, "t", &[k]))
                .unwrap();
            assert!(rec.tuples.len() <= tiny_cfg().max_action_tuples);
            let acts = agent.vocab().to_sys_acts(&rec.tuples);
            for (t, act) in rec.tuples.iter().zip(&acts) {
                assert_ne!(t.domain, STOP_DOMAIN);
                assert!(dialogue_env::intent_legal(&ont, &state, &act.domain, act.intent));
                assert!(dialogue_env::slot_legal(&ont, &act.domain, act.intent, &act.slot));
            }
            // distributions are proper
            for step in &rec.steps {
                let sum: f64 = step.probs.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "step distribution sums to {sum}");
                assert!(step.probs.iter().all(|&p| p >= 0.0));
            }
        }
    }
}

#[test]
fn zero_db_masks_inform_out_of_the_support() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(7, "db0", &[]);
    let agent = build_agent::<f64>(ArchKind::Ddpt, ont.clone(), tiny_cfg(), &mut rng).unwrap();
    let mut state = lodging_state(&ont);
    // contradictory constraint empties the lodging database
    state
        .constraints
        .get_mut("lodging")
        .unwrap()
        .insert("price".into(), "unheard-of".into());
    state.refresh_db_counts(&ont);
    assert_eq!(state.db_count("lodging"), 0);

    let inform = agent.vocab().intent_index("inform").unwrap();
    let lodging = agent.vocab().domain_index("lodging").unwrap();
    let mut saw_lodging_intent = false;
    for k in 0..200 {
        let rec = agent.decide(&state, DecodeMode::Train, &mut stream(8, "s", &[k])).unwrap();
        for (si, step) in rec.steps.iter().enumerate() {
            if step.kind == StepKind::Intent && rec.steps[si - 1].chosen == lodging {
                saw_lodging_intent = true;
                assert_eq!(step.probs[inform], 0.0, "inform must be exactly masked");
            }
        }
    }
    assert!(saw_lodging_intent, "sampling never visited the lodging domain");
}

#[test]
fn gate_mixture_arithmetic() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(9, "gate", &[]);
    let mut agent =
        build_agent::<f64>(ArchKind::Ddpt, ont.clone(), tiny_cfg(), &mut rng).unwrap();

    // zero the token projection so all domain logits are equal, and zero the
    // gate so p_curr = 0.5
    for name in ["tok_proj.w", "tok_proj.b", "gate.w", "gate.b"] {
        let shape = agent.policy_store().get(name).shape().to_vec();
        agent
            .policy_store_mut()
            .replace_value(name, nn_core::NumArray::zeros(&shape));
    }

    // two current domains (lodging, museum), two non-current symbols (stop, cab)
    let mut state = DialogueState::initial(&ont);
    state.apply_user_turn(
        &ont,
        &[
            UserAct::inform("lodging", "area", "west"),
            UserAct::inform("museum", "theme", "art"),
        ],
    );
    let rec = agent.decide(&state, DecodeMode::Train, &mut stream(10, "g", &[])).unwrap();
    let first = &rec.steps[0];
    assert_eq!(first.kind, StepKind::Domain);
    for (i, &p) in first.probs.iter().enumerate() {
        assert!((p - 0.25).abs() < 1e-12, "domain {i} has probability {p}");
    }
}

#[test]
fn gate_saturated_high_confines_mass_to_current_domains() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(11, "gate1", &[]);
    let mut agent =
        build_agent::<f64>(ArchKind::Ddpt, ont.clone(), tiny_cfg(), &mut rng).unwrap();
    // gate bias +100: sigmoid saturates to exactly 1.0 in f64
    let b = agent.policy_store().get("gate.b").shape().to_vec();
    agent
        .policy_store_mut()
        .replace_value("gate.b", nn_core::NumArray::from_vec(&b, vec![100.0]));
    let w_shape = agent.policy_store().get("gate.w").shape().to_vec();
    agent
        .policy_store_mut()
        .replace_value("gate.w", nn_core::NumArray::zeros(&w_shape));

    let state = lodging_state(&ont);
    let lodging = agent.vocab().domain_index("lodging").unwrap();
    for k in 0..10 {
        let rec = agent.decide(&state, DecodeMode::Train, &mut stream(12, "g", &[k])).unwrap();
        for step in rec.steps.iter().filter(|s| s.kind == StepKind::Domain) {
            assert_eq!(step.probs[lodging], 1.0);
            for (i, &p) in step.probs.iter().enumerate() {
                if i != lodging {
                    assert_eq!(p, 0.0, "non-current domain {i} received mass {p}");
                }
            }
        }
    }
}

#[test]
fn analytic_stop_log_prob_matches_gate_output() {
    let ont = Arc::new(builtin_desk3());
    let mut rng = stream(13, "gate2", &[]);
    let mut agent =
        build_agent::<f64>(ArchKind::Ddpt, ont.clone(), tiny_cfg(), &mut rng).unwrap();
    let beta = 0.3_f64;
    for name in ["tok_proj.w", "tok_proj.b", "gate.w"] {
        let shape = agent.policy_store().get(name).shape().to_vec();
        agent
            .policy_store_mut()
            .replace_value(name, nn_core::NumArray::zeros(&shape));
    }
    agent
        .policy_store_mut()
        .replace_value("gate.b", nn_core::NumArray::vector(vec![beta]));

    // current = {lodging}; non-current = {stop, museum, cab}, equal logits
    let state = lodging_state(&ont);
    let record = ActionRecord {
        tuples: vec![],
        stopped: true,
        log_prob: 0.0,
        steps: vec![policies::StepRecord {
            kind: StepKind::Domain,
            chosen: STOP_DOMAIN,
            probs: vec![0.0; agent.vocab().domains.len()],
        }],
    };
    let mut g = nn_core::Graph::new();
    let score = agent.score(&mut g, &state, &record).unwrap();
    let p_curr = 1.0 / (1.0 + (-beta as f64).exp());
    let expected = ((1.0 - p_curr) / 3.0).ln();
    assert!(
        (score.log_prob_value - expected).abs() < 1e-12,
        "{} vs {expected}",
        score.log_prob_value
    );
}

#[test]
fn parameter_counts_under_domain_growth() {
    let desk = Arc::new(builtin_desk3());
    let full = Arc::new(builtin_full5());
    let cfg = tiny_cfg();

    let mut rng = stream(14, "count", &[]);
    let mut ddpt = build_agent::<f64>(ArchKind::Ddpt, desk.clone(), cfg.clone(), &mut rng).unwrap();
    let mut bin = build_agent::<f64>(ArchKind::Bin, desk.clone(), cfg.clone(), &mut rng).unwrap();
    let mut sem = build_agent::<f64>(ArchKind::Sem, desk.clone(), cfg.clone(), &mut rng).unwrap();

    let (d0, b0, s0) =
        (ddpt.trainable_param_count(), bin.trainable_param_count(), sem.trainable_param_count());

    // frozen description vectors exist but are excluded from the count
    assert!(!ddpt.policy_store().is_trainable("desc.domain"));

    let mut reg_rng = stream(15, "grow", &[]);
    ddpt.register_domain(full.clone(), "bistro", &mut reg_rng).unwrap();
    bin.register_domain(full.clone(), "bistro", &mut reg_rng).unwrap();
    sem.register_domain(full.clone(), "bistro", &mut reg_rng).unwrap();

    assert_eq!(ddpt.trainable_param_count(), d0, "transformer policy must not grow");
    assert!(bin.trainable_param_count() > b0, "flat-binary policy must grow");
    assert!(sem.trainable_param_count() > s0, "sem grows by new embeddings");
    // sem grows much less than bin: embeddings only vs input rows
    assert!(
        sem.trainable_param_count() - s0 < bin.trainable_param_count() - b0,
        "sem growth should be embedding rows only"
    );
}

#[test]
fn zero_shot_decoding_on_a_freshly_registered_domain() {
    // agent trained only on two domains; the third enters the ontology later
    let desk = builtin_desk3();
    let two = Arc::new(Ontology { domains: desk.domains[..2].to_vec() });
    let full = Arc::new(desk);
    let mut rng = stream(16, "zs", &[]);
    let mut agent = build_agent::<f64>(ArchKind::Ddpt, two, tiny_cfg(), &mut rng).unwrap();
    assert!(agent.vocab().domain_index("cab").is_none());

    let mut reg_rng = stream(17, "zs", &[]);
    agent.register_domain(full.clone(), "cab", &mut reg_rng).unwrap();
    let cab = agent.vocab().domain_index("cab").expect("cab decodable");

    // user talks about the unseen domain; saturate the gate so the domain
    // step must pick from the current set
    let bshape = agent.policy_store().get("gate.b").shape().to_vec();
    agent
        .policy_store_mut()
        .replace_value("gate.b", nn_core::NumArray::from_vec(&bshape, vec![100.0]));
    let wshape = agent.policy_store().get("gate.w").shape().to_vec();
    agent
        .policy_store_mut()
        .replace_value("gate.w", nn_core::NumArray::zeros(&wshape));

    let mut state = DialogueState::initial(&full);
    state.apply_user_turn(&full, &[UserAct::inform("cab", "area", "west")]);
    let mut found = false;
    for k in 0..20 {
        let rec = agent.decide(&state, DecodeMode::Train, &mut stream(18, "zs", &[k])).unwrap();
        if rec.tuples.iter().any(|t| t.domain == cab) {
            found = true;
            break;
        }
    }
    assert!(found, "the fresh domain is selectable when it is current");
}

#[test]
fn critic_with_zero_head_outputs_zero() {
    let ont = Arc::new(builtin_desk3());
    for (i, arch) in [ArchKind::Ddpt, ArchKind::Bin, ArchKind::Sem].into_iter().enumerate() {
        let mut rng = stream(19, "crit", &[i as u64]);
        let mut agent = build_agent::<f64>(arch, ont.clone(), tiny_cfg(), &mut rng).unwrap();
        for name in ["head.w", "head.b"] {
            let shape = agent.critic_store().get(name).shape().to_vec();
            agent
                .critic_store_mut()
                .replace_value(name, nn_core::NumArray::zeros(&shape));
        }
        assert_eq!(agent.behavior_value(&lodging_state(&ont)), 0.0);
    }
}

#[test]
fn bin_extension_is_behavior_preserving() {
    let desk = Arc::new(builtin_desk3());
    let full = Arc::new(builtin_full5());
    let mut rng = stream(20, "bin", &[]);
    let mut agent = policies::BinPolicy::<f64>::new(desk.clone(), tiny_cfg(), &mut rng).unwrap();
    let state = lodging_state(&desk);

    let before = {
        let mut g = nn_core::Graph::new();
        let e = agent.encode(&mut g, &state).unwrap();
        g.value(e).clone()
    };
    let v_before = policies::Agent::<f64>::behavior_value(&agent, &state);

    let mut reg_rng = stream(21, "bin", &[]);
    policies::Agent::<f64>::register_domain(&mut agent, full, "bistro", &mut reg_rng).unwrap();

    let after = {
        let mut g = nn_core::Graph::new();
        let e = agent.encode(&mut g, &state).unwrap();
        g.value(e).clone()
    };
    assert_eq!(before.as_slice(), after.as_slice(), "zero-initialized rows preserve behavior");
    assert_eq!(v_before, policies::Agent::<f64>::behavior_value(&agent, &state));
}

#[test]
fn checkpoints_roundtrip_agents_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ont = Arc::new(builtin_desk3());
    let state = lodging_state(&ont);
    for (i, arch) in [ArchKind::Ddpt, ArchKind::Bin, ArchKind::Sem].into_iter().enumerate() {
        let mut rng = stream(22, "ckpt", &[i as u64]);
        let agent = build_agent::<f64>(arch, ont.clone(), tiny_cfg(), &mut rng).unwrap();
        let path = dir.path().join(format!("{}.ckpt", arch.as_str()));
        let header = nn_core::CheckpointHeader { step: 5, seed: 42, stream: 1 };
        save_agent(agent.as_ref(), &path, header).unwrap();

        let (loaded, h2) = load_agent::<f64>(&path).unwrap();
        assert_eq!(h2, header);
        assert_eq!(loaded.kind(), arch);
        let a = agent.decide(&state, DecodeMode::Eval, &mut stream(23, "c", &[])).unwrap();
        let b = loaded.decide(&state, DecodeMode::Eval, &mut stream(23, "c", &[])).unwrap();
        assert_eq!(record_fingerprint(&a), record_fingerprint(&b));
        assert_eq!(agent.behavior_value(&state), loaded.behavior_value(&state));
    }
}
