// Shared generators and reference oracles. Nothing here calls into the
// library's solvers, so agreement with them is an independent check.
#![allow(dead_code)]

use rand::Rng;
use repeated_irl::mdp::Policy;
use repeated_irl::Environment;

pub fn random_env<R: Rng>(rng: &mut R, d: usize, a: usize, gamma: f64) -> Environment {
    let transitions: Vec<Vec<Vec<f64>>> = (0..a)
        .map(|_| {
            (0..d)
                .map(|_| {
                    // sparse rows keep some exact structure in play
                    let mut row: Vec<f64> = (0..d).map(|_| if rng.gen_bool(0.6) { rng.gen::<f64>() } else { 0.0 }).collect();
                    if row.iter().all(|&p| p == 0.0) {
                        row[rng.gen_range(0..d)] = 1.0;
                    }
                    let total: f64 = row.iter().sum();
                    row.iter().map(|p| p / total).collect()
                })
                .collect()
        })
        .collect();
    let names = (0..a).map(|i| format!("a{i}")).collect();
    Environment::new(names, transitions, gamma).unwrap()
}

pub fn random_deterministic_env<R: Rng>(rng: &mut R, d: usize, a: usize, gamma: f64) -> Environment {
    let next: Vec<Vec<usize>> = (0..a).map(|_| (0..d).map(|_| rng.gen_range(0..d)).collect()).collect();
    let names = (0..a).map(|i| format!("a{i}")).collect();
    Environment::deterministic(names, &next, gamma).unwrap()
}

/// Gaussian elimination with partial pivoting on a dense square system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// `V = (I - γP_π)^{-1} R` by direct elimination.
pub fn brute_values(env: &Environment, pi: &[usize], r: &[f64]) -> Vec<f64> {
    let d = env.num_states();
    let g = env.gamma();
    let a: Vec<Vec<f64>> = (0..d)
        .map(|s| (0..d).map(|t| f64::from(u8::from(s == t)) - g * env.prob(pi[s], s, t)).collect())
        .collect();
    gauss_solve(a, r.to_vec()).expect("I - γP is invertible")
}

/// Every deterministic policy of `env`.
pub fn all_policies(env: &Environment) -> Vec<Vec<usize>> {
    let (d, a) = (env.num_states(), env.num_actions());
    let mut out = Vec::new();
    let mut cur = vec![0usize; d];
    loop {
        out.push(cur.clone());
        let mut i = 0;
        while i < d {
            cur[i] += 1;
            if cur[i] < a {
                break;
            }
            cur[i] = 0;
            i += 1;
        }
        if i == d {
            return out;
        }
    }
}

/// For each policy, whether its values dominate every other policy's
/// values state by state within `tol`.
pub fn brute_optimal_flags(env: &Environment, r: &[f64], tol: f64) -> Vec<(Vec<usize>, bool)> {
    let policies = all_policies(env);
    let values: Vec<Vec<f64>> = policies.iter().map(|p| brute_values(env, p, r)).collect();
    let d = env.num_states();
    let best: Vec<f64> = (0..d)
        .map(|s| values.iter().map(|v| v[s]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    policies
        .into_iter()
        .zip(&values)
        .map(|(p, v)| {
            let ok = (0..d).all(|s| v[s] >= best[s] - tol);
            (p, ok)
        })
        .collect()
}

pub fn policy(actions: &[usize]) -> Policy {
    Policy::new(actions.to_vec())
}

/// Maximum of `c·x` over `{x : A x ≤ b, lo ≤ x ≤ hi}` by enumerating every
/// basic solution. Only for a handful of variables.
pub fn vertex_max(c: &[f64], rows: &[(Vec<f64>, f64)], lo: &[f64], hi: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut all: Vec<(Vec<f64>, f64)> = rows.to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        all.push((e.clone(), hi[j]));
        e[j] = -1.0;
        all.push((e, -lo[j]));
    }
    let m = all.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| all[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| all[i].1).collect();
        if let Some(x) = gauss_solve(a, b) {
            let feasible = all
                .iter()
                .all(|(row, rhs)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-7);
            if feasible {
                let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        // next n-combination of m
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for k in i + 1..n {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Kolmogorov-Smirnov distance of `xs` from Uniform(lo, hi).
pub fn ks_uniform(xs: &[f64], lo: f64, hi: f64) -> f64 {
    let mut v: Vec<f64> = xs.iter().map(|x| (x - lo) / (hi - lo)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).abs().max(((i + 1) as f64 / n - u).abs()))
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value, `sqrt(-ln(α/2)/2) / sqrt(n)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
