mod common;

use common::spearman;
use repeated_irl::harness::{
    run_benchmark, run_single_env_sweep, transcript_json, write_rounds_csv, write_summary_csv, Algorithm, Profile, RunConfig,
};

fn small() -> RunConfig {
    RunConfig {
        n: 4,
        low_states: 3,
        budget: 10,
        sims: 6,
        candidates: 4,
        samples: 200,
        burn_in: 300,
        thinning: 3,
        sweep_envs: 4,
        sweep_sims: 2,
        ..RunConfig::profile(Profile::Desk)
    }
}

fn rounds_csv(config: &RunConfig) -> String {
    let bench = run_benchmark(config).unwrap();
    let mut out = Vec::new();
    write_rounds_csv(&mut out, &bench.records).unwrap();
    // drop the wall clock column, the only one that may differ between runs
    let text = String::from_utf8(out).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let clock = header.iter().position(|h| *h == "wall_clock_ms").unwrap();
    text.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != clock).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn outputs_are_reproducible() {
    let config = RunConfig { sims: 2, budget: 3, ..small() };
    let a = rounds_csv(&config);
    assert_eq!(a, rounds_csv(&config));
    assert!(a.starts_with("algorithm,sim,round,chosen_env_id,est_gain,f_estimate,lp_error_linf"));
    assert_eq!(a.lines().count(), 1 + 3 * 2 * 3);
    let other = rounds_csv(&RunConfig { seed: 1, ..config });
    assert_ne!(a, other);
}

#[test]
fn summary_and_transcript_shapes() {
    let config = RunConfig { sims: 2, budget: 3, algorithms: vec![Algorithm::Greedy, Algorithm::RandVaried], ..small() };
    let bench = run_benchmark(&config).unwrap();
    assert_eq!(bench.records.len(), 4);
    let mut out = Vec::new();
    write_summary_csv(&mut out, &bench.summary).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    let json = transcript_json(&bench.records);
    let entries = json.as_array().unwrap();
    assert_eq!(entries.len(), 4 * 3);
    assert!(entries.iter().all(|e| e["maze"]["h_walls"].is_array() && e["observed_policy"].is_array()));
    assert!(bench.final_mean(Algorithm::RandUniform).is_none());
    for rec in &bench.records {
        let f: Vec<f64> = rec.rounds.iter().filter_map(|r| r.f_estimate).collect();
        assert!(f.windows(2).all(|w| w[0] <= w[1]));
        assert!(rec.rounds.iter().all(|r| r.hidden_retained));
    }
}

#[test]
fn greedy_error_trends_down() {
    let config = RunConfig { algorithms: vec![Algorithm::Greedy], ..small() };
    let bench = run_benchmark(&config).unwrap();
    let rounds: Vec<f64> = bench.summary.iter().map(|r| r.round as f64).collect();
    let errors: Vec<f64> = bench.summary.iter().map(|r| r.mean_error).collect();
    let rho = spearman(&rounds, &errors);
    assert!(rho < -0.8, "spearman {rho}, errors {errors:?}");
}

#[test]
fn sweep_covers_every_pair() {
    let config = small();
    let sweep = run_single_env_sweep(&config).unwrap();
    assert_eq!(sweep.entries.len(), config.sweep_envs * config.sweep_lambdas.len());
    assert!(sweep.entries.iter().all(|e| e.mean_error >= sweep.best.mean_error));
    assert!(sweep.entries.iter().any(|e| e.lambda == 0.05) && sweep.entries.iter().any(|e| e.lambda == 10.0));
}

#[test]
fn overregularized_selection_is_zero() {
    let config = RunConfig { sims: 2, budget: 3, lambda: 1e3, algorithms: vec![Algorithm::RandUniform], ..small() };
    let bench = run_benchmark(&config).unwrap();
    assert_eq!(bench.final_mean(Algorithm::RandUniform), Some(10.0));
}
