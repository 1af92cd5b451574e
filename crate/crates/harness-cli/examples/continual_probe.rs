//! Runs one architecture through the desk schedule and prints the boundary
//! success matrix, for tuning the desk configuration.
//!
//! Args: arch batch seeds policy_lr update_every entropy

use harness::{compute_fz, run_schedule, EvalMatrix, MetricKind, RunConfig, TaskSchedule};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arch = args.get(1).cloned().unwrap_or_else(|| "bin".into());
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let seeds: Vec<u64> = args
        .get(3)
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![11]);

    let cfg_text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml"),
    )
    .unwrap();
    let mut cfg = RunConfig::from_toml_str(&cfg_text).unwrap();
    cfg.run.architecture = arch.clone();
    cfg.run.seeds = seeds;
    cfg.learner.batch_episodes = batch;
    if let Some(lr) = args.get(4).and_then(|s| s.parse::<f64>().ok()) {
        cfg.learner.policy_lr = lr;
        cfg.learner.critic_lr = 2.0 * lr;
    }
    if let Some(ue) = args.get(5).and_then(|s| s.parse::<usize>().ok()) {
        cfg.learner.update_every = ue;
    }
    if let Some(e) = args.get(6).and_then(|s| s.parse::<f64>().ok()) {
        cfg.learner.entropy_weight = e;
    }

    let dir = tempfile::tempdir().unwrap();
    let t0 = std::time::Instant::now();
    run_schedule(&cfg, dir.path()).unwrap();
    let ontology = cfg.load_ontology().unwrap();
    let schedule = TaskSchedule::build(&cfg, &ontology).unwrap();
    let matrix = EvalMatrix::load_run_dir(dir.path()).unwrap();

    println!(
        "arch={arch} batch={batch} lr={} ue={} ent={} | {:.0}s",
        cfg.learner.policy_lr,
        cfg.learner.update_every,
        cfg.learner.entropy_weight,
        t0.elapsed().as_secs_f64()
    );
    let boundaries = schedule.boundaries();
    print!("{:>10}", "domain");
    for b in &boundaries {
        print!("{b:>7}");
    }
    println!();
    for d in ontology.domain_names() {
        print!("{d:>10}");
        for &b in &boundaries {
            let vals: Vec<f64> = matrix
                .records
                .iter()
                .filter(|r| r.dialogues_trained == b && r.domain == d)
                .map(|r| r.success_rate)
                .collect();
            print!("{:>7.2}", vals.iter().sum::<f64>() / vals.len().max(1) as f64);
        }
        println!();
    }
    let rep = compute_fz(&matrix, &schedule, MetricKind::Success).unwrap();
    println!("F = {:.3}  Z = {:.3}", rep.forgetting, rep.forward_transfer);
}
