//! The polytope `K(𝓔)` of rewards consistent with a set of experiments, its
//! hit-and-run sampler, and Monte-Carlo estimates of eliminated volume.
//!
//! Volumes are measured with the uniform probability measure on the reward
//! box, so the total mass is 1 and eliminated fractions lie in `[0, 1]`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::mdp::{
    difference_rows, ng_russell_constraints, resolvent, ActionId, ConstraintRow, Environment, Policy,
    ZERO_ROW_TOL,
};
use crate::reward::Bounds;

/// Slack allowed on `w · R ≥ 0` and on the box when testing membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Inscribed radii below this mean the set has no usable interior.
pub const MIN_INTERIOR_RADIUS: f64 = 1e-9;

pub const DEFAULT_BURN_IN: usize = 1_000;
pub const DEFAULT_THINNING: usize = 10;

// recompute slacks from scratch this often to stop drift
const SLACK_REFRESH: usize = 64;

// multipliers above this mark rows in an equality certificate
const EQUALITY_DUAL_TOL: f64 = 1e-9;
// eigenvalues below this fraction of the largest span the null space
const NULL_SPACE_TOL: f64 = 1e-10;

/// Where a constraint row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowTag {
    pub experiment: usize,
    pub state: usize,
    pub action: ActionId,
}

/// Conjunction of half-spaces `w · R ≥ 0` with the reward box.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistentSet {
    dim: usize,
    bounds: Bounds,
    // row-major, one row per tag
    coeffs: Vec<f64>,
    tags: Vec<RowTag>,
    experiments: usize,
}

impl ConsistentSet {
    /// The whole box `[min, max]^d`.
    pub fn empty_set(dim: usize, bounds: Bounds) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        Ok(ConsistentSet {
            dim,
            bounds,
            coeffs: Vec::new(),
            tags: Vec::new(),
            experiments: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn num_rows(&self) -> usize {
        self.tags.len()
    }

    pub fn num_experiments(&self) -> usize {
        self.experiments
    }

    pub fn row(&self, i: usize) -> (&[f64], RowTag) {
        (&self.coeffs[i * self.dim..(i + 1) * self.dim], self.tags[i])
    }

    /// `K(𝓔) ∩ K(E, π)`.
    pub fn add_experiment(&self, env: &Environment, pi: &Policy) -> Result<ConsistentSet> {
        if env.num_states() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: env.num_states(),
            });
        }
        let rows = ng_russell_constraints(env, pi)?;
        Ok(self.with_rows(&rows))
    }

    /// Adds precomputed rows as one new experiment.
    pub fn with_rows(&self, rows: &[ConstraintRow]) -> ConsistentSet {
        let mut next = self.clone();
        let experiment = self.experiments;
        for row in rows {
            debug_assert_eq!(row.coeffs.len(), self.dim);
            if row.coeffs.iter().all(|c| c.abs() < ZERO_ROW_TOL) {
                continue;
            }
            next.coeffs.extend_from_slice(&row.coeffs);
            next.tags.push(RowTag {
                experiment,
                state: row.state,
                action: row.action,
            });
        }
        next.experiments += 1;
        next
    }

    pub fn contains(&self, r: &[f64]) -> bool {
        if r.len() != self.dim {
            return false;
        }
        let in_box = r
            .iter()
            .all(|&x| x >= self.bounds.min - MEMBERSHIP_TOL && x <= self.bounds.max + MEMBERSHIP_TOL);
        in_box && self.coeffs.chunks(self.dim).all(|w| dot(w, r) >= -MEMBERSHIP_TOL)
    }

    /// Center and radius of a large ball inscribed in the relative interior.
    pub fn inscribed_center(&self) -> Result<(Vec<f64>, f64)> {
        let hull = self.relative_interior()?;
        Ok((hull.center, hull.radius))
    }

    /// Rows that hold with equality on the whole set, the directions left
    /// free by them, and a well-inside point of the set within those
    /// directions.
    ///
    /// Equalities are found by maximizing the smallest normalized row value
    /// `τ`; when the optimum is `τ = 0` the rows with positive multipliers
    /// combine to a certificate that each of them vanishes on the set. They
    /// are set aside and the program is solved again until `τ > 0`.
    pub fn relative_interior(&self) -> Result<Interior> {
        let d = self.dim;
        let m = self.num_rows();
        let mut eq = vec![false; m];
        loop {
            if eq.iter().all(|&e| e) {
                break;
            }
            let sol = self.ball_program(&eq, false)?;
            if sol.x[2 * d] > MIN_INTERIOR_RADIUS {
                break;
            }
            let mut found = false;
            for (i, e) in eq.iter_mut().enumerate() {
                if !*e && sol.duals[i] > EQUALITY_DUAL_TOL {
                    *e = true;
                    found = true;
                }
            }
            if !found {
                return Err(Error::Solver("no equality certificate at zero margin".into()));
            }
        }
        let equalities: Vec<usize> = (0..m).filter(|&i| eq[i]).collect();
        let basis = self.null_space(&equalities);
        if basis.ncols() == 0 {
            return Err(Error::EmptyInterior { radius: 0.0 });
        }
        let sol = self.ball_program(&eq, true)?;
        let center = (0..d).map(|s| sol.x[s] - sol.x[d + s]).collect();
        Ok(Interior {
            center,
            radius: sol.x[2 * d],
            equalities,
            basis,
        })
    }

    /// `max τ` over `[R⁺, R⁻, τ]` with `ŵ·R ≥ τ` on rows outside `eq` and
    /// `ŵ·R ≥ 0` on rows in `eq`; with `box_margin` the box is shrunk by `τ`.
    fn ball_program(&self, eq: &[bool], box_margin: bool) -> Result<crate::lp::LpSolution> {
        let d = self.dim;
        let mut lp = LinearProgram::new(2 * d + 1);
        let mut c = vec![0.0; 2 * d + 1];
        c[2 * d] = 1.0;
        lp.set_objective(c)?;
        for s in 0..d {
            lp.set_bounds(s, 0.0, self.bounds.max)?;
            lp.set_bounds(d + s, 0.0, -self.bounds.min)?;
        }
        lp.set_bounds(2 * d, 0.0, self.bounds.width())?;
        let mut row = vec![0.0; 2 * d + 1];
        for (w, &is_eq) in self.coeffs.chunks(d).zip(eq) {
            let norm = dot(w, w).sqrt();
            for k in 0..d {
                row[k] = -w[k] / norm;
                row[d + k] = w[k] / norm;
            }
            row[2 * d] = if is_eq { 0.0 } else { 1.0 };
            lp.add_row(&row, 0.0)?;
        }
        if box_margin {
            for s in 0..d {
                row.iter_mut().for_each(|x| *x = 0.0);
                row[s] = 1.0;
                row[d + s] = -1.0;
                row[2 * d] = 1.0;
                lp.add_row(&row, self.bounds.max)?;
                row[s] = -1.0;
                row[d + s] = 1.0;
                lp.add_row(&row, -self.bounds.min)?;
            }
        }
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver(format!("inscribed ball program {:?}", sol.status)));
        }
        Ok(sol)
    }

    /// Orthonormal basis (one column per direction) of `{x : w·x = 0}` for the given rows.
    fn null_space(&self, rows: &[usize]) -> DMatrix<f64> {
        let d = self.dim;
        if rows.is_empty() {
            return DMatrix::identity(d, d);
        }
        let mut gram = DMatrix::zeros(d, d);
        for &i in rows {
            let w = self.row(i).0;
            let norm2 = dot(w, w);
            for a in 0..d {
                for b in 0..d {
                    gram[(a, b)] += w[a] * w[b] / norm2;
                }
            }
        }
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, x: &f64| m.max(x.abs()));
        let keep: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] <= NULL_SPACE_TOL * top).collect();
        let mut basis = DMatrix::zeros(d, keep.len());
        for (col, &k) in keep.iter().enumerate() {
            basis.set_column(col, &eig.eigenvectors.column(k));
        }
        basis
    }
}

/// Affine hull and an interior point of a [`ConsistentSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Interior {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Rows satisfied with equality by every member.
    pub equalities: Vec<usize>,
    /// `d x k` orthonormal basis of the directions the set extends in.
    pub basis: DMatrix<f64>,
}

impl Interior {
    pub fn intrinsic_dim(&self) -> usize {
        self.basis.ncols()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Approximately uniform samples from a [`ConsistentSet`], one per column.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCloud {
    samples: DMatrix<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
}

impl SampleCloud {
    /// Wraps explicit samples (one `Vec` per sample).
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let d = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::Domain("samples of different dimension".into()));
        }
        let mut m = DMatrix::zeros(d, samples.len());
        for (j, s) in samples.iter().enumerate() {
            m.column_mut(j).copy_from_slice(s);
        }
        Ok(SampleCloud {
            samples: m,
            seed: 0,
            burn_in: 0,
            thinning: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.samples.as_slice()[j * d..(j + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        let d = self.dim().max(1);
        self.samples.as_slice().chunks(d)
    }

    /// `d x n` matrix with one sample per column.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.samples
    }

    /// CSV with header `r0,...,r{d-1}` and one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.dim()).map(|k| format!("r{k}")))?;
        for s in self.iter() {
            w.write_record(s.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Hit-and-run chain over `k`, started from the inscribed-ball center.
///
/// Each step draws a uniform direction, intersects the line with the box and
/// every half-space, and moves to a uniform point of the resulting chord.
/// When some rows hold with equality on all of `k`, directions are drawn
/// within the subspace they leave free, so the chain is uniform on the
/// relative interior.
pub fn hit_and_run_sample(k: &ConsistentSet, n: usize, seed: u64, burn_in: usize, thinning: usize) -> Result<SampleCloud> {
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let thinning = thinning.max(1);
    let hull = k.relative_interior()?;
    if !(hull.radius > MIN_INTERIOR_RADIUS) {
        return Err(Error::EmptyInterior { radius: hull.radius });
    }
    let d = k.dim;
    let full = hull.intrinsic_dim() == d;
    let mut is_eq = vec![false; k.num_rows()];
    for &i in &hull.equalities {
        is_eq[i] = true;
    }
    let rows: Vec<f64> = k
        .coeffs
        .chunks(d)
        .zip(&is_eq)
        .filter(|(_, &e)| !e)
        .flat_map(|(w, _)| w.iter().copied())
        .collect();
    let m = rows.len() / d;
    let (lo_box, hi_box) = (k.bounds.min, k.bounds.max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = hull.center.clone();
    let mut slack: Vec<f64> = rows.chunks(d).map(|w| dot(w, &x)).collect();
    let mut z = vec![0.0; hull.intrinsic_dim()];
    let mut u = vec![0.0; d];
    let mut au = vec![0.0; m];
    let mut out = DMatrix::zeros(d, n);
    let total = burn_in + n * thinning;
    let mut taken = 0;
    for step in 1..=total {
        if full {
            u.iter_mut().for_each(|ui| *ui = rng.sample(StandardNormal));
        } else {
            z.iter_mut().for_each(|zi| *zi = rng.sample(StandardNormal));
            for (s, ui) in u.iter_mut().enumerate() {
                *ui = (0..z.len()).map(|c| hull.basis[(s, c)] * z[c]).sum();
            }
        }
        let norm = dot(&u, &u).sqrt();
        u.iter_mut().for_each(|ui| *ui /= norm);

        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (&xi, &ui) in x.iter().zip(&u) {
            if ui > 0.0 {
                hi = hi.min((hi_box - xi) / ui);
                lo = lo.max((lo_box - xi) / ui);
            } else if ui < 0.0 {
                hi = hi.min((lo_box - xi) / ui);
                lo = lo.max((hi_box - xi) / ui);
            }
        }
        for ((w, a), &s) in rows.chunks(d).zip(au.iter_mut()).zip(&slack) {
            *a = dot(w, &u);
            if *a > 0.0 {
                lo = lo.max(-s / *a);
            } else if *a < 0.0 {
                hi = hi.min(-s / *a);
            }
        }
        // the current point is feasible; guard against rounding
        let (lo, hi) = (lo.min(0.0), hi.max(0.0));
        let t = lo + (hi - lo) * rng.gen::<f64>();
        for (xi, ui) in x.iter_mut().zip(&u) {
            *xi = (*xi + t * ui).clamp(lo_box, hi_box);
        }
        if step % SLACK_REFRESH == 0 {
            if !full {
                // pull the point back onto the hull, which passes through 0
                let coords = hull.basis.tr_mul(&DVector::from_column_slice(&x));
                let back = &hull.basis * coords;
                for (xi, bi) in x.iter_mut().zip(back.iter()) {
                    *xi = bi.clamp(lo_box, hi_box);
                }
            }
            for (s, w) in slack.iter_mut().zip(rows.chunks(d)) {
                *s = dot(w, &x);
            }
        } else {
            for (s, a) in slack.iter_mut().zip(&au) {
                *s += t * a;
            }
        }
        if step > burn_in && (step - burn_in).is_multiple_of(thinning) {
            out.column_mut(taken).copy_from_slice(&x);
            taken += 1;
        }
    }
    debug_assert_eq!(taken, n);
    Ok(SampleCloud {
        samples: out,
        seed,
        burn_in,
        thinning,
    })
}

/// Fraction of cloud samples violating at least one of `rows`: the estimated
/// marginal gain `f(𝓔 ∪ {(E, π)}) - f(𝓔)` under the normalized measure.
pub fn estimate_f(cloud: &SampleCloud, rows: &[ConstraintRow]) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::Domain("empty sample cloud".into()));
    }
    if let Some(row) = rows.iter().find(|r| r.coeffs.len() != cloud.dim()) {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            got: row.coeffs.len(),
        });
    }
    let eliminated = cloud
        .iter()
        .filter(|r| rows.iter().any(|w| dot(&w.coeffs, r) < -MEMBERSHIP_TOL))
        .count();
    Ok(eliminated as f64 / cloud.len() as f64)
}

/// Number of cloud samples that satisfy every row of `base` but violate some
/// row of `new`: the eliminated-count gain of `new` on top of `base`.
pub fn marginal_count(cloud: &SampleCloud, base: &[ConstraintRow], new: &[ConstraintRow]) -> usize {
    let violates = |rows: &[ConstraintRow], r: &[f64]| rows.iter().any(|w| dot(&w.coeffs, r) < -MEMBERSHIP_TOL);
    cloud.iter().filter(|r| !violates(base, r) && violates(new, r)).count()
}

/// Same count as `estimate_f(cloud, ng_russell_constraints(env, pi))`,
/// evaluated as `(P_π(s) - P_a(s)) · V` with `V = (I - γP_π)^{-1} R` for all
/// samples at once.
pub fn eliminated_by_policy(env: &Environment, pi: &Policy, cloud: &SampleCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::Domain("empty sample cloud".into()));
    }
    if cloud.dim() != env.num_states() {
        return Err(Error::DimensionMismatch {
            expected: env.num_states(),
            got: cloud.dim(),
        });
    }
    let inv = resolvent(env, pi)?;
    let d = env.num_states();
    let diffs: Vec<_> = difference_rows(env, pi)
        .into_iter()
        .filter(|(_, _, diff)| {
            (0..d).any(|j| diff.iter().map(|&(k, x)| x * inv[(k, j)]).sum::<f64>().abs() >= ZERO_ROW_TOL)
        })
        .map(|(_, _, diff)| diff)
        .collect();
    if diffs.is_empty() {
        return Ok(0.0);
    }
    let values = &inv * cloud.matrix();
    let v = values.as_slice();
    let eliminated = (0..cloud.len())
        .filter(|&j| {
            let col = &v[j * d..(j + 1) * d];
            diffs
                .iter()
                .any(|diff| diff.iter().map(|&(k, x)| x * col[k]).sum::<f64>() < -MEMBERSHIP_TOL)
        })
        .count();
    Ok(eliminated as f64 / cloud.len() as f64)
}
