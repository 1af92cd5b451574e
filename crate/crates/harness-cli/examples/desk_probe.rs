//! Throughput and learning probe for desk-scale configuration tuning.
//!
//! Trains one architecture on one domain and prints eval success over time
//! plus wall-clock cost, so config candidates can be compared quickly.
//!
//! Usage: `cargo run --release -p harness-cli --example desk_probe -- [arch] [domain] [dialogues]`

use std::sync::Arc;
use std::time::Instant;

use clear_learner::ClearLearner;
use harness::rollout::run_episode;
use harness::RunConfig;
use nn_core::rng::stream;
use policies::{build_agent, ArchKind, DecodeMode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arch = ArchKind::parse(args.get(1).map(String::as_str).unwrap_or("ddpt")).unwrap();
    let domain = args.get(2).cloned().unwrap_or_else(|| "museum".to_string());
    let total: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(300);

    let cfg_text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml"),
    )
    .expect("configs/desk.toml");
    let cfg = RunConfig::from_toml_str(&cfg_text).unwrap();
    let ontology = Arc::new(cfg.load_ontology().unwrap());
    let allowed = vec![domain.clone()];

    let seed = 1u64;
    let mut rng = stream(seed, "probe-init", &[]);
    let mut agent = build_agent::<f64>(arch, ontology.clone(), cfg.model.clone(), &mut rng).unwrap();
    let mut learner = ClearLearner::new(cfg.learner.clone(), seed).unwrap();

    let eval = |agent: &dyn policies::Agent<f64>, tag: u64| -> (f64, f64) {
        let n = 50;
        let mut s = 0.0;
        let mut r = 0.0;
        for i in 0..n {
            let ep = run_episode(
                agent,
                &ontology,
                &cfg.env.env,
                &allowed,
                &domain,
                i,
                stream(seed, "probe-ee", &[tag, i]),
                stream(seed, "probe-ep", &[tag, i]),
                DecodeMode::Eval,
            )
            .unwrap();
            s += ep.success as usize as f64;
            r += ep.total_return;
        }
        (s / n as f64, r / n as f64)
    };

    let (s0, r0) = eval(agent.as_ref(), 0);
    println!("arch={} domain={domain} | start success={s0:.2} return={r0:.1}", arch.as_str());

    let t0 = Instant::now();
    let mut turns = 0usize;
    for d in 1..=total {
        let ep = run_episode(
            agent.as_ref(),
            &ontology,
            &cfg.env.env,
            &allowed,
            &domain,
            d,
            stream(seed, "probe-env", &[d]),
            stream(seed, "probe-pol", &[d]),
            DecodeMode::Train,
        )
        .unwrap();
        turns += ep.len();
        learner.observe(ep, agent.as_mut()).unwrap();
        if d % 50 == 0 {
            let (s, r) = eval(agent.as_ref(), d);
            let dt = t0.elapsed().as_secs_f64();
            println!(
                "d={d:4} | success={s:.2} return={r:6.1} | {:.2} dlg/s | avg turns {:.1} | updates {}",
                d as f64 / dt,
                turns as f64 / d as f64,
                learner.updates
            );
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("total {total} dialogues in {dt:.1}s ({:.2} dlg/s incl. evals)", total as f64 / dt);
}
