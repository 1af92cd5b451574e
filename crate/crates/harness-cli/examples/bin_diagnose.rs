//! Diagnoses the flat-binary baseline's behavior on the hard domain after
//! training on the two easy ones.

use std::sync::Arc;

use clear_learner::ClearLearner;
use harness::rollout::run_episode;
use harness::RunConfig;
use nn_core::rng::stream;
use policies::{build_agent, ArchKind, DecodeMode, StepKind};

fn main() {
    let cfg_text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml"),
    )
    .unwrap();
    let cfg = RunConfig::from_toml_str(&cfg_text).unwrap();
    let ontology = Arc::new(cfg.load_ontology().unwrap());
    let seed = 11u64;
    let mut rng = stream(seed, "agent-init", &[]);
    let mut agent =
        build_agent::<f64>(ArchKind::Bin, ontology.clone(), cfg.model.clone(), &mut rng).unwrap();
    let mut learner = ClearLearner::new(cfg.learner.clone(), seed).unwrap();

    let mut global = 0u64;
    for task in ["museum", "cab", "lodging"] {
        let allowed = vec![task.to_string()];
        let mut succ = 0;
        for d in 1..=300u64 {
            global += 1;
            let ep = run_episode(
                agent.as_ref(),
                &ontology,
                &cfg.env.env,
                &allowed,
                task,
                global,
                stream(seed, "train-env", &[global]),
                stream(seed, "train-pol", &[global]),
                DecodeMode::Train,
            )
            .unwrap();
            succ += ep.success as usize;
            learner.observe(ep, agent.as_mut()).unwrap();
            if d % 100 == 0 {
                println!("{task} d={d}: train-success last 100 window total so far {succ}");
            }
        }
    }

    // behavior details on a lodging dialogue
    let allowed = vec!["lodging".to_string()];
    for k in 0..3 {
        let ep = run_episode(
            agent.as_ref(),
            &ontology,
            &cfg.env.env,
            &allowed,
            "lodging",
            9000 + k,
            stream(seed, "diag-env", &[k]),
            stream(seed, "diag-pol", &[k]),
            DecodeMode::Eval,
        )
        .unwrap();
        println!("--- eval dialogue {k}: success={} return={:.0}", ep.success, ep.total_return);
        for (t, tr) in ep.transitions.iter().enumerate() {
            let acts = agent.vocab().to_sys_acts(&tr.action.tuples);
            let acts: Vec<String> = acts.iter().map(|a| a.to_string()).collect();
            let dom_probs: Vec<String> = tr
                .action
                .steps
                .iter()
                .filter(|s| s.kind == StepKind::Domain)
                .map(|s| {
                    s.probs.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join("/")
                })
                .collect();
            println!(
                "  t{t}: user={:?} sys=[{}] domP=[{}]",
                ep.transitions[t].state.user_acts.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                acts.join(", "),
                dom_probs.join(" | ")
            );
        }
    }
    println!("domains order in vocab: {:?}", agent.vocab().domains);
}
