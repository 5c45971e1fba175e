//! Linear programming and the reward-selection heuristics built on it.
//!
//! [`solve_lp`] is a dense two-phase primal simplex on a condensed
//! (nonbasic-columns-only) tableau with Dantzig pricing. Ratio tests run on a
//! randomly perturbed right-hand side so degenerate vertices do not stall
//! the method; the unperturbed right-hand side is carried along and any
//! infeasibility left in it at the end is removed with dual simplex pivots.
//! Long runs of degenerate pivots still switch pricing to Bland's rule.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ng_russell_constraints, Environment, Policy};
use crate::reward::{Bounds, Reward};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
// tolerated negativity of a basic variable in the final basis
const PRIMAL_TOL: f64 = 1e-10;
const PERTURBATION: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;

/// `maximize c·x  s.t.  A x ≤ b,  lower ≤ x ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    /// Program over `num_vars` variables, all in `[0, ∞)` with zero objective.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn set_objective(&mut self, c: Vec<f64>) -> Result<()> {
        self.check_len(c.len())?;
        self.objective = c;
        Ok(())
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Appends `coeffs · x ≤ rhs`.
    pub fn add_row(&mut self, coeffs: &[f64], rhs: f64) -> Result<()> {
        self.check_len(coeffs.len())?;
        if coeffs.iter().chain([&rhs]).any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite constraint coefficient".into()));
        }
        self.rows.extend_from_slice(coeffs);
        self.rhs.push(rhs);
        Ok(())
    }

    /// Appends a row given as sparse `(variable, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> Result<()> {
        let mut dense = vec![0.0; self.num_vars];
        for &(j, x) in coeffs {
            if j >= self.num_vars {
                return Err(Error::Domain(format!("variable {j} out of range")));
            }
            dense[j] += x;
        }
        self.add_row(&dense, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> Result<()> {
        if var >= self.num_vars {
            return Err(Error::Domain(format!("variable {var} out of range")));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("invalid bounds [{lower}, {upper}]")));
        }
        self.lower[var] = lower;
        self.upper[var] = upper;
        Ok(())
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        let n = self.num_vars;
        (&self.rows[i * n..(i + 1) * n], self.rhs[i])
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: len,
            });
        }
        Ok(())
    }

    /// Plain-text standard form: objective line, one line per row, then bounds.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "maximize {}", fmt(&self.objective));
        for i in 0..self.num_rows() {
            let (row, b) = self.row(i);
            let _ = writeln!(out, "row {} <= {b:e}", fmt(row));
        }
        for j in 0..self.num_vars {
            let _ = writeln!(out, "bound x{j} {:e} {:e}", self.lower[j], self.upper[j]);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of the original variables; meaningful only when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Nonnegative multiplier of each row of the program (bound rows
    /// excluded); meaningful only when optimal.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

/// How an original variable is expressed through nonnegative ones.
#[derive(Clone, Copy)]
enum VarMap {
    // x = offset + y
    Shift { y: usize, offset: f64 },
    // x = offset - y
    Mirror { y: usize, offset: f64 },
    // x = y+ - y-
    Split { pos: usize, neg: usize },
}

struct Tableau {
    m: usize,
    n: usize,
    // m x n, row-major: x_B[i] = b[i] - Σ_j a[i][j] x_N[j]
    a: Vec<f64>,
    b: Vec<f64>,
    // b for a perturbed right-hand side; drives the ratio test
    bp: Vec<f64>,
    // z = z0 + Σ_j cost[j] x_N[j]
    cost: Vec<f64>,
    z0: f64,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    pivots: usize,
    max_pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let n = self.n;
        let p = self.a[r * n + c];
        let inv = 1.0 / p;
        {
            let row = &mut self.a[r * n..(r + 1) * n];
            for x in row.iter_mut() {
                *x *= inv;
            }
            row[c] = inv;
        }
        self.b[r] *= inv;
        self.bp[r] *= inv;
        let pivot_row: Vec<f64> = self.a[r * n..(r + 1) * n].to_vec();
        let br = self.b[r];
        let bpr = self.bp[r];
        for i in (0..self.m).filter(|&i| i != r) {
            let f = self.a[i * n + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * n..(i + 1) * n];
            for (x, &pr) in row.iter_mut().zip(&pivot_row) {
                *x -= f * pr;
            }
            row[c] = -f * inv;
            self.b[i] -= f * br;
            self.bp[i] -= f * bpr;
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (x, &pr) in self.cost.iter_mut().zip(&pivot_row) {
                *x -= f * pr;
            }
            self.cost[c] = -f * inv;
            self.z0 += f * br;
        }
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[c]);
        self.pivots += 1;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let eligible = (0..self.n).filter(|&j| self.cost[j] > COST_TOL);
        if bland {
            eligible.min_by_key(|&j| self.nonbasic[j])
        } else {
            eligible.max_by(|&i, &j| {
                self.cost[i]
                    .total_cmp(&self.cost[j])
                    .then(self.nonbasic[j].cmp(&self.nonbasic[i]))
            })
        }
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let n = self.n;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.a[i * n + c];
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.bp[i].max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((k, r)) => {
                    if ratio < r - 1e-12 || (ratio <= r + 1e-12 && self.basic[i] < self.basic[k]) {
                        Some((i, ratio))
                    } else {
                        Some((k, r))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn check_limit(&self) -> Result<()> {
        if self.pivots >= self.max_pivots {
            return Err(Error::Solver(format!(
                "pivot limit {} reached ({} rows, {} columns, objective {})",
                self.max_pivots, self.m, self.n, self.z0
            )));
        }
        Ok(())
    }

    fn perturb(&mut self) {
        let scale = PERTURBATION * (1.0 + self.b.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        for (i, (bp, &b)) in self.bp.iter_mut().zip(&self.b).enumerate() {
            // deterministic pseudo-random factor in [1, 2)
            let u = (crate::seed::splitmix64(i as u64) >> 11) as f64 / (1u64 << 53) as f64;
            *bp = b.max(0.0) + scale * (1.0 + u);
        }
    }

    fn primal(&mut self) -> Result<Outcome> {
        let mut degenerate = 0usize;
        loop {
            self.check_limit()?;
            let Some(c) = self.entering(degenerate >= DEGENERATE_RUN) else {
                return Ok(Outcome::Optimal);
            };
            let Some(r) = self.leaving(c) else {
                return Ok(Outcome::Unbounded);
            };
            if self.bp[r] <= PIVOT_TOL {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
            if !self.z0.is_finite() {
                return Err(Error::Solver("objective diverged".into()));
            }
        }
    }

    /// Dual simplex pivots until the unperturbed basic solution is feasible.
    fn dual_cleanup(&mut self) -> Result<()> {
        let n = self.n;
        loop {
            let Some(r) = (0..self.m)
                .filter(|&i| self.b[i] < -PRIMAL_TOL)
                .min_by(|&i, &k| self.b[i].total_cmp(&self.b[k]))
            else {
                return Ok(());
            };
            self.check_limit()?;
            let c = (0..n)
                .filter(|&j| self.a[r * n + j] < -PIVOT_TOL)
                .min_by(|&i, &j| {
                    let ri = self.cost[i].min(0.0) / self.a[r * n + i];
                    let rj = self.cost[j].min(0.0) / self.a[r * n + j];
                    ri.total_cmp(&rj).then(self.nonbasic[i].cmp(&self.nonbasic[j]))
                });
            let Some(c) = c else {
                return Err(Error::Solver(format!(
                    "basic variable stuck at {:e} after perturbed solve",
                    self.b[r]
                )));
            };
            self.pivot(r, c);
        }
    }

    fn optimize(&mut self) -> Result<Outcome> {
        loop {
            self.perturb();
            if let Outcome::Unbounded = self.primal()? {
                return Ok(Outcome::Unbounded);
            }
            self.dual_cleanup()?;
            if self.entering(false).is_none() {
                return Ok(Outcome::Optimal);
            }
        }
    }

    fn value_of(&self, var: usize) -> f64 {
        self.basic
            .iter()
            .position(|&v| v == var)
            .map_or(0.0, |i| self.b[i].max(0.0))
    }
}

/// Solves `lp`; infeasible and unbounded programs are reported through the status.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let nv = lp.num_vars;
    if lp.objective.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite objective coefficient".into()));
    }
    // standardize variables to y >= 0
    let mut maps = Vec::with_capacity(nv);
    let mut ny = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..nv {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let map = if lo.is_finite() {
            if hi.is_finite() {
                bound_rows.push((ny, hi - lo));
            }
            VarMap::Shift { y: ny, offset: lo }
        } else if hi.is_finite() {
            VarMap::Mirror { y: ny, offset: hi }
        } else {
            ny += 1;
            VarMap::Split { pos: ny - 1, neg: ny }
        };
        ny += 1;
        maps.push(map);
    }

    let m = lp.num_rows() + bound_rows.len();
    let mut a = vec![0.0; m * ny];
    let mut b = Vec::with_capacity(m);
    for i in 0..lp.num_rows() {
        let (row, rhs) = lp.row(i);
        let mut rhs = rhs;
        let dst = &mut a[i * ny..(i + 1) * ny];
        for (j, &coef) in row.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { y, offset } => {
                    dst[y] += coef;
                    rhs -= coef * offset;
                }
                VarMap::Mirror { y, offset } => {
                    dst[y] -= coef;
                    rhs -= coef * offset;
                }
                VarMap::Split { pos, neg } => {
                    dst[pos] += coef;
                    dst[neg] -= coef;
                }
            }
        }
        b.push(rhs);
    }
    for (k, &(y, cap)) in bound_rows.iter().enumerate() {
        a[(lp.num_rows() + k) * ny + y] = 1.0;
        b.push(cap);
    }
    let mut cost = vec![0.0; ny];
    let mut constant = 0.0;
    for (j, &c) in lp.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Shift { y, offset } => {
                cost[y] += c;
                constant += c * offset;
            }
            VarMap::Mirror { y, offset } => {
                cost[y] -= c;
                constant += c * offset;
            }
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let max_pivots = 50_000 + 20 * (m + ny);
    let needs_phase_one = b.iter().any(|&x| x < 0.0);
    let mut t = if needs_phase_one {
        // artificial column x0 (label ny + m) with -1 in every row
        let n1 = ny + 1;
        let mut a1 = vec![0.0; m * n1];
        for i in 0..m {
            a1[i * n1..i * n1 + ny].copy_from_slice(&a[i * ny..(i + 1) * ny]);
            a1[i * n1 + ny] = -1.0;
        }
        let mut nonbasic: Vec<usize> = (0..ny).collect();
        nonbasic.push(ny + m);
        let mut cost1 = vec![0.0; n1];
        cost1[ny] = -1.0;
        let mut t = Tableau {
            m,
            n: n1,
            a: a1,
            bp: b.clone(),
            b: b.clone(),
            cost: cost1,
            z0: 0.0,
            basic: (ny..ny + m).collect(),
            nonbasic,
            pivots: 0,
            max_pivots,
        };
        let worst = (0..m)
            .min_by(|&i, &k| t.b[i].total_cmp(&t.b[k]))
            .expect("phase one implies a row");
        t.pivot(worst, ny);
        t.optimize()?;
        if t.z0 < -FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![f64::NAN; nv],
                objective: f64::NAN,
                duals: vec![f64::NAN; lp.num_rows()],
                pivots: t.pivots,
            });
        }
        let art = ny + m;
        if let Some(r) = t.basic.iter().position(|&v| v == art) {
            let n1 = t.n;
            let c = (0..n1).max_by(|&i, &k| t.a[r * n1 + i].abs().total_cmp(&t.a[r * n1 + k].abs()));
            match c {
                Some(c) if t.a[r * n1 + c].abs() > PIVOT_TOL => t.pivot(r, c),
                _ => {
                    // row reads x0 = 0 regardless of the nonbasics: drop it
                    t.a.drain(r * n1..(r + 1) * n1);
                    t.b.remove(r);
                    t.bp.remove(r);
                    t.basic.remove(r);
                    t.m -= 1;
                }
            }
        }
        let col = t.nonbasic.iter().position(|&v| v == art).expect("artificial is nonbasic");
        let n1 = t.n;
        let mut a2 = Vec::with_capacity(t.m * (n1 - 1));
        for i in 0..t.m {
            for j in (0..n1).filter(|&j| j != col) {
                a2.push(t.a[i * n1 + j]);
            }
        }
        t.a = a2;
        t.nonbasic.remove(col);
        t.n -= 1;
        // price the original objective against the current basis
        let label_cost = |v: usize| if v < ny { cost[v] } else { 0.0 };
        t.z0 = (0..t.m).map(|i| label_cost(t.basic[i]) * t.b[i]).sum();
        t.cost = (0..t.n)
            .map(|j| {
                label_cost(t.nonbasic[j])
                    - (0..t.m).map(|i| label_cost(t.basic[i]) * t.a[i * t.n + j]).sum::<f64>()
            })
            .collect();
        t
    } else {
        Tableau {
            m,
            n: ny,
            a,
            bp: b.clone(),
            b,
            cost,
            z0: 0.0,
            basic: (ny..ny + m).collect(),
            nonbasic: (0..ny).collect(),
            pivots: 0,
            max_pivots,
        }
    };

    let outcome = t.optimize()?;
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![f64::NAN; nv],
            objective: f64::INFINITY,
            duals: vec![f64::NAN; lp.num_rows()],
            pivots: t.pivots,
        });
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|&map| match map {
            VarMap::Shift { y, offset } => offset + t.value_of(y),
            VarMap::Mirror { y, offset } => offset - t.value_of(y),
            VarMap::Split { pos, neg } => t.value_of(pos) - t.value_of(neg),
        })
        .collect();
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    debug_assert!((objective - (t.z0 + constant)).abs() <= 1e-6 * (1.0 + objective.abs()));
    // a nonbasic slack's reduced cost is minus the row's multiplier
    let mut duals = vec![0.0; lp.num_rows()];
    for (j, &label) in t.nonbasic.iter().enumerate() {
        if label >= ny && label - ny < lp.num_rows() {
            duals[label - ny] = (-t.cost[j]).max(0.0);
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
        pivots: t.pivots,
    })
}

/// Reward chosen by a selection heuristic.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub reward: Reward,
    pub objective: f64,
    pub status: LpStatus,
}

/// Encodes the generalized selection program over `K(𝓔)`:
/// maximize `Σ_s min_{i, a ≠ πⁱ(s)} (Pⁱ_π(s) - Pⁱ_a(s))(I - γPⁱ_π)^{-1} R - λ Σ_s |R(s)|`.
///
/// Variables are `[R⁺, R⁻, t]` with `R = R⁺ - R⁻` and one epigraph variable
/// `t_s ≥ 0` per state. Every nonzero optimality row of state `s` appears as
/// `t_s ≤ w·R`; together with `t_s ≥ 0` this also imposes `w·R ≥ 0`, i.e.
/// membership in `K(𝓔)`. Actions whose dynamics at `s` equal the observed
/// action's give a vanishing row and take no part in the minimum; a state
/// without any differing action in any experiment contributes `t_s = 0`.
pub fn selection_program(experiments: &[(Environment, Policy)], lambda: f64, bounds: Bounds) -> Result<LinearProgram> {
    let Some((first, _)) = experiments.first() else {
        return Err(Error::Domain("no experiments to select from".into()));
    };
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("regularization {lambda} must be >= 0")));
    }
    let d = first.num_states();
    let mut lp = LinearProgram::new(3 * d);
    let mut objective = vec![-lambda; 2 * d];
    objective.extend(std::iter::repeat_n(1.0, d));
    lp.set_objective(objective)?;
    for s in 0..d {
        lp.set_bounds(s, 0.0, bounds.max)?;
        lp.set_bounds(d + s, 0.0, -bounds.min)?;
    }
    let mut rows_per_state = vec![0usize; d];
    for (env, pi) in experiments {
        if env.num_states() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: env.num_states(),
            });
        }
        let rows = ng_russell_constraints(env, pi)?;
        for row in &rows {
            rows_per_state[row.state] += 1;
            let mut coeffs = vec![0.0; 3 * d];
            for (k, &w) in row.coeffs.iter().enumerate() {
                coeffs[k] = -w;
                coeffs[d + k] = w;
            }
            coeffs[2 * d + row.state] = 1.0;
            lp.add_row(&coeffs, 0.0)?;
        }
    }
    for (s, &count) in rows_per_state.iter().enumerate() {
        if count == 0 {
            lp.set_bounds(2 * d + s, 0.0, 0.0)?;
        }
    }
    Ok(lp)
}

pub fn select_generalized(experiments: &[(Environment, Policy)], lambda: f64, bounds: Bounds) -> Result<SelectionResult> {
    let lp = selection_program(experiments, lambda, bounds)?;
    let d = lp.num_vars() / 3;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        // R = 0 with t = 0 is always feasible and the box bounds the objective
        return Err(Error::Solver(format!(
            "selection program reported {:?}",
            sol.status
        )));
    }
    let reward: Vec<f64> = (0..d).map(|s| sol.x[s] - sol.x[d + s]).collect();
    Ok(SelectionResult {
        reward: Reward::new(reward)?,
        objective: sol.objective,
        status: sol.status,
    })
}

/// Single-environment selection heuristic.
pub fn select_classic(env: &Environment, pi: &Policy, lambda: f64, bounds: Bounds) -> Result<SelectionResult> {
    select_generalized(&[(env.clone(), pi.clone())], lambda, bounds)
}
