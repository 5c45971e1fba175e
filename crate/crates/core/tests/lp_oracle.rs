mod common;

use common::vertex_max;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repeated_irl::gridworld::{MazeDistribution, MazeUniverse};
use repeated_irl::lp::{select_classic, selection_program, solve_lp, LinearProgram, LpStatus};
use repeated_irl::mdp::solve_optimal;
use repeated_irl::{Bounds, Environment};

struct Random {
    c: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn random_program(seed: u64, max_vars: usize, max_rows: usize) -> Random {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(0..=max_rows);
    let c = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let rows = (0..m)
        .map(|_| {
            // some integer rows so degenerate vertices show up
            let row: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { f64::from(rng.gen_range(-3i8..=3)) })
                .collect();
            (row, f64::from(rng.gen_range(-2i8..=6)))
        })
        .collect();
    let lo: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 0.0 } else { -5.0 }).collect();
    let hi = (0..n).map(|_| 5.0).collect();
    Random { c, rows, lo, hi }
}

fn build(p: &Random) -> LinearProgram {
    let mut lp = LinearProgram::new(p.c.len());
    lp.set_objective(p.c.clone()).unwrap();
    for (row, b) in &p.rows {
        lp.add_row(row, *b).unwrap();
    }
    for j in 0..p.c.len() {
        lp.set_bounds(j, p.lo[j], p.hi[j]).unwrap();
    }
    lp
}

fn reference(lp: &LinearProgram) -> Option<f64> {
    let mut prob = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..lp.num_vars())
        .map(|j| prob.add_var(lp.objective()[j], lp.bounds(j)))
        .collect();
    for i in 0..lp.num_rows() {
        let (row, b) = lp.row(i);
        let expr: Vec<_> = row.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(j, x)| (vars[j], *x)).collect();
        prob.add_constraint(&expr[..], ComparisonOp::Le, b);
    }
    match prob.solve() {
        Ok(sol) => Some(sol.objective()),
        Err(minilp::Error::Infeasible) => None,
        Err(e) => panic!("reference solver: {e}"),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_vertex_enumeration(seed in any::<u64>()) {
        let p = random_program(seed, 3, 5);
        let sol = solve_lp(&build(&p)).unwrap();
        match vertex_max(&p.c, &p.rows, &p.lo, &p.hi) {
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!(close(sol.objective, best), "{} vs {}", sol.objective, best);
                let lp = build(&p);
                for i in 0..lp.num_rows() {
                    let (row, b) = lp.row(i);
                    let v: f64 = row.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
                    prop_assert!(v <= b + 1e-7);
                }
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }

    #[test]
    fn matches_reference_solver(seed in any::<u64>()) {
        let p = random_program(seed, 20, 30);
        let lp = build(&p);
        let sol = solve_lp(&lp).unwrap();
        match reference(&lp) {
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!(close(sol.objective, best), "{} vs {}", sol.objective, best);
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }
}

#[test]
fn selection_programs_match_reference_solver() {
    let universe = MazeUniverse { n: 4, gamma: 0.8, dist: MazeDistribution::Varied };
    let bounds = Bounds::symmetric(10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..6u64 {
        let r: Vec<f64> = (0..16).map(|_| if rng.gen_bool(0.2) { rng.gen_range(0.0..10.0) } else { 0.0 }).collect();
        let experiments: Vec<_> = (0..4)
            .map(|k| {
                let env = universe.sample(trial * 10 + k).unwrap().compile();
                let pi = solve_optimal(&env, &r, 1e-10).unwrap();
                (env, pi)
            })
            .collect();
        for lambda in [0.0, 0.05, 0.5, 5.0] {
            let lp = selection_program(&experiments, lambda, bounds).unwrap();
            let ours = solve_lp(&lp).unwrap();
            assert_eq!(ours.status, LpStatus::Optimal);
            let theirs = reference(&lp).expect("R = 0 is feasible");
            assert!(close(ours.objective, theirs), "trial {trial} λ {lambda}: {} vs {theirs}", ours.objective);
        }
    }
}

#[test]
fn two_state_gap_goes_to_the_box() {
    // stay/swap with state 1 preferred: the single Q-gap row is
    // t_0 ≤ c (R(1) - R(0)) with c = γ / (1 + γ) for the observed policy
    let env = Environment::deterministic(vec!["stay".into(), "swap".into()], &[vec![0, 1], vec![1, 0]], 0.5).unwrap();
    let pi = solve_optimal(&env, &[0.0, 1.0], 1e-12).unwrap();
    assert_eq!(pi.actions(), &[1, 0]);
    let bounds = Bounds::symmetric(1.0).unwrap();
    let sel = select_classic(&env, &pi, 0.0, bounds).unwrap();
    // enumerate the tiny program directly over (R0, R1, t0, t1)
    let lp = selection_program(&[(env, pi)], 0.0, bounds).unwrap();
    let d = 2;
    let mut rows = Vec::new();
    for i in 0..lp.num_rows() {
        let (row, b) = lp.row(i);
        // fold R⁺ - R⁻ back into R
        let folded: Vec<f64> = (0..d).map(|s| row[s]).chain((0..d).map(|s| row[2 * d + s])).collect();
        rows.push((folded, b));
    }
    let lo: Vec<f64> = vec![-1.0, -1.0, 0.0, 0.0];
    let hi: Vec<f64> = (0..2).map(|_| 1.0).chain((0..d).map(|s| lp.bounds(2 * d + s).1.min(1e3))).collect();
    let best = vertex_max(&[0.0, 0.0, 1.0, 1.0], &rows, &lo, &hi).unwrap();
    assert!(close(sel.objective, best), "{} vs {best}", sel.objective);
    let r = sel.reward.values();
    assert!((r[1] - 1.0).abs() < 1e-9 && (r[0] + 1.0).abs() < 1e-9, "{r:?}");
}
