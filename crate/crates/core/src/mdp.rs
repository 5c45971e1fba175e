//! Finite MDPs without rewards, deterministic policies, optimal-policy
//! computation and the linear optimality conditions on reward vectors.
//!
//! Rewards attach to states: `R(s)` is collected whenever the agent is in
//! state `s`, so the value of a policy is `V = (I - γ P_π)^{-1} R`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ActionId = usize;

/// Tolerance on row sums of transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Rows of the optimality system whose sup-norm falls below this are dropped.
pub const ZERO_ROW_TOL: f64 = 1e-12;

/// Default Bellman-residual stopping tolerance for value iteration.
pub const DEFAULT_VI_TOL: f64 = 1e-10;

const MAX_VI_ITERS: usize = 100_000;
const MAX_POLISH_ITERS: usize = 64;

type SparseRow = Vec<(usize, f64)>;

/// An environment `(S, A, P, γ)`: per-action row-stochastic transition
/// matrices over `d` states plus a discount factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentJson", into = "EnvironmentJson")]
pub struct Environment {
    num_states: usize,
    actions: Vec<String>,
    // per action, row-major d x d
    transitions: Vec<Vec<f64>>,
    gamma: f64,
    // [action][state] -> nonzero entries of the row
    sparse: Vec<Vec<SparseRow>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EnvironmentJson {
    d: usize,
    gamma: f64,
    actions: Vec<String>,
    transitions: BTreeMap<String, Vec<Vec<f64>>>,
}

impl TryFrom<EnvironmentJson> for Environment {
    type Error = Error;

    fn try_from(json: EnvironmentJson) -> Result<Self> {
        let mut matrices = Vec::with_capacity(json.actions.len());
        for name in &json.actions {
            let rows = json.transitions.get(name).ok_or_else(|| {
                Error::InvalidEnvironment(format!("missing transitions for action {name:?}"))
            })?;
            matrices.push(rows.clone());
        }
        if json.transitions.len() != json.actions.len() {
            return Err(Error::InvalidEnvironment(
                "transitions name actions that are not listed".into(),
            ));
        }
        let env = Environment::new(json.actions, matrices, json.gamma)?;
        if env.num_states != json.d {
            return Err(Error::DimensionMismatch {
                expected: json.d,
                got: env.num_states,
            });
        }
        Ok(env)
    }
}

impl From<Environment> for EnvironmentJson {
    fn from(env: Environment) -> Self {
        let d = env.num_states;
        let transitions = env
            .actions
            .iter()
            .zip(&env.transitions)
            .map(|(name, flat)| (name.clone(), flat.chunks(d).map(<[f64]>::to_vec).collect()))
            .collect();
        EnvironmentJson {
            d,
            gamma: env.gamma,
            actions: env.actions,
            transitions,
        }
    }
}

impl Environment {
    /// Builds an environment from per-action `d x d` matrices given as rows.
    pub fn new(actions: Vec<String>, transitions: Vec<Vec<Vec<f64>>>, gamma: f64) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidEnvironment("no actions".into()));
        }
        if actions.len() != transitions.len() {
            return Err(Error::InvalidEnvironment(format!(
                "{} action names but {} transition matrices",
                actions.len(),
                transitions.len()
            )));
        }
        let unique: BTreeSet<&String> = actions.iter().collect();
        if unique.len() != actions.len() {
            return Err(Error::InvalidEnvironment("duplicate action names".into()));
        }
        let d = transitions[0].len();
        let mut flat = Vec::with_capacity(actions.len());
        for (a, rows) in transitions.into_iter().enumerate() {
            if rows.len() != d || rows.iter().any(|row| row.len() != d) {
                return Err(Error::InvalidEnvironment(format!(
                    "transition matrix for action {a} is not {d}x{d}"
                )));
            }
            flat.push(rows.into_iter().flatten().collect());
        }
        Self::from_flat(actions, flat, gamma)
    }

    /// Builds an environment from row-major flattened matrices.
    pub fn from_flat(actions: Vec<String>, transitions: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidEnvironment(format!(
                "discount {gamma} outside (0, 1)"
            )));
        }
        if actions.is_empty() || actions.len() != transitions.len() {
            return Err(Error::InvalidEnvironment(
                "action names and transition matrices disagree".into(),
            ));
        }
        let len = transitions[0].len();
        let d = (len as f64).sqrt().round() as usize;
        if d == 0 || d * d != len {
            return Err(Error::InvalidEnvironment(
                "transition matrices must be square and nonempty".into(),
            ));
        }
        let mut sparse = Vec::with_capacity(transitions.len());
        for (a, matrix) in transitions.iter().enumerate() {
            if matrix.len() != len {
                return Err(Error::InvalidEnvironment(format!(
                    "transition matrix for action {a} has wrong size"
                )));
            }
            let mut rows = Vec::with_capacity(d);
            for s in 0..d {
                let row = &matrix[s * d..(s + 1) * d];
                let mut sum = 0.0;
                let mut nz = Vec::new();
                for (t, &p) in row.iter().enumerate() {
                    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidEnvironment(format!(
                            "P[{a}][{s}][{t}] = {p} is not a probability"
                        )));
                    }
                    sum += p;
                    if p != 0.0 {
                        nz.push((t, p));
                    }
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidEnvironment(format!(
                        "row {s} of action {a} sums to {sum}"
                    )));
                }
                rows.push(nz);
            }
            sparse.push(rows);
        }
        Ok(Environment {
            num_states: d,
            actions,
            transitions,
            gamma,
            sparse,
        })
    }

    /// Deterministic environment: `next[a][s]` is the successor of `s` under `a`.
    pub fn deterministic(actions: Vec<String>, next: &[Vec<usize>], gamma: f64) -> Result<Self> {
        let d = next.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(next.len());
        for (a, succ) in next.iter().enumerate() {
            if succ.len() != d {
                return Err(Error::InvalidEnvironment(format!(
                    "successor table for action {a} has length {}",
                    succ.len()
                )));
            }
            let mut m = vec![0.0; d * d];
            for (s, &t) in succ.iter().enumerate() {
                if t >= d {
                    return Err(Error::InvalidEnvironment(format!("successor {t} out of range")));
                }
                m[s * d + t] = 1.0;
            }
            flat.push(m);
        }
        Self::from_flat(actions, flat, gamma)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn prob(&self, action: ActionId, from: usize, to: usize) -> f64 {
        self.transitions[action][from * self.num_states + to]
    }

    /// Dense row `P_a(s, ·)`.
    pub fn row(&self, action: ActionId, state: usize) -> &[f64] {
        let d = self.num_states;
        &self.transitions[action][state * d..(state + 1) * d]
    }

    /// Nonzero entries of `P_a(s, ·)` as `(successor, probability)`.
    pub fn sparse_row(&self, action: ActionId, state: usize) -> &[(usize, f64)] {
        &self.sparse[action][state]
    }

    pub fn matrix(&self, action: ActionId) -> DMatrix<f64> {
        let d = self.num_states;
        DMatrix::from_row_slice(d, d, &self.transitions[action])
    }

    /// Stable 64-bit FNV-1a fingerprint of the dynamics.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(&(self.num_states as u64).to_le_bytes());
        eat(&self.gamma.to_bits().to_le_bytes());
        for m in &self.transitions {
            for p in m {
                eat(&p.to_bits().to_le_bytes());
            }
        }
        h
    }

    fn expect(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.num_states {
            return Err(Error::DimensionMismatch {
                expected: self.num_states,
                got: r.len(),
            });
        }
        if let Some(x) = r.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("reward entry {x} is not finite")));
        }
        Ok(())
    }

    fn expected_next(&self, action: ActionId, state: usize, v: &[f64]) -> f64 {
        self.sparse[action][state].iter().map(|&(t, p)| p * v[t]).sum()
    }
}

/// A deterministic stationary policy `π : S → A`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Vec<ActionId>);

impl Policy {
    pub fn new(actions: Vec<ActionId>) -> Self {
        Policy(actions)
    }

    pub fn constant(num_states: usize, action: ActionId) -> Self {
        Policy(vec![action; num_states])
    }

    pub fn action(&self, state: usize) -> ActionId {
        self.0[state]
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if self.0.len() != env.num_states() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states, environment has {}",
                self.0.len(),
                env.num_states()
            )));
        }
        if let Some((s, &a)) = self.0.iter().enumerate().find(|(_, &a)| a >= env.num_actions()) {
            return Err(Error::InvalidPolicy(format!(
                "action {a} at state {s} not in environment"
            )));
        }
        Ok(())
    }
}

/// A policy defined on a subset of states, as induced by observed trajectories.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialPolicy(BTreeMap<usize, ActionId>);

impl PartialPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, state: usize) -> Option<ActionId> {
        self.0.get(&state).copied()
    }

    /// Records `action` at `state`; returns the previously stored action if it differs.
    pub fn insert(&mut self, state: usize, action: ActionId) -> Option<ActionId> {
        match self.0.insert(state, action) {
            Some(prev) if prev != action => {
                self.0.insert(state, prev);
                Some(prev)
            }
            _ => None,
        }
    }

    pub fn domain(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `π ≡_D π_T`: agreement on every state of the domain.
    pub fn agrees_with(&self, pi: &Policy) -> bool {
        self.0.iter().all(|(&s, &a)| pi.0.get(s) == Some(&a))
    }

    /// Completion filling unobserved states with the lowest action id.
    pub fn complete(&self, num_states: usize) -> Policy {
        Policy((0..num_states).map(|s| self.get(s).unwrap_or(0)).collect())
    }
}

/// `d x |A|` table whose `(s, a)` entry is `P_a(s, ·) (I - γ P_π)^{-1} R`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn get(&self, state: usize, action: ActionId) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn state_row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// How an agent picks among (numerically) tied optimal actions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Lowest,
    Highest,
}

/// One row `w` of the optimality system `w · R ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRow {
    pub state: usize,
    pub action: ActionId,
    pub coeffs: Vec<f64>,
}

/// `P_π`: row `s` is row `s` of `P_{π(s)}`.
pub fn policy_matrix(env: &Environment, pi: &Policy) -> Result<DMatrix<f64>> {
    pi.validate(env)?;
    let d = env.num_states();
    Ok(DMatrix::from_fn(d, d, |s, t| env.prob(pi.action(s), s, t)))
}

fn resolvent_lu(env: &Environment, pi: &Policy) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let d = env.num_states();
    let g = env.gamma();
    let mut m = DMatrix::<f64>::identity(d, d);
    for s in 0..d {
        for &(t, p) in env.sparse_row(pi.action(s), s) {
            m[(s, t)] -= g * p;
        }
    }
    Ok(m.lu())
}

/// `(I - γ P_π)^{-1}`.
pub fn resolvent(env: &Environment, pi: &Policy) -> Result<DMatrix<f64>> {
    pi.validate(env)?;
    resolvent_lu(env, pi)?
        .try_inverse()
        .ok_or_else(|| Error::Numeric("I - γP_π is singular".into()))
}

/// Exact policy values `V_π = (I - γ P_π)^{-1} R`.
pub fn policy_values(env: &Environment, pi: &Policy, r: &[f64]) -> Result<Vec<f64>> {
    pi.validate(env)?;
    env.expect(r)?;
    let rhs = DVector::from_column_slice(r);
    let v = resolvent_lu(env, pi)?
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("I - γP_π is singular".into()))?;
    Ok(v.as_slice().to_vec())
}

pub fn q_table(env: &Environment, pi: &Policy, r: &[f64]) -> Result<QTable> {
    let v = policy_values(env, pi, r)?;
    Ok(continuation_table(env, &v))
}

fn continuation_table(env: &Environment, v: &[f64]) -> QTable {
    let (d, k) = (env.num_states(), env.num_actions());
    let mut values = Vec::with_capacity(d * k);
    for s in 0..d {
        for a in 0..k {
            values.push(env.expected_next(a, s, v));
        }
    }
    QTable {
        num_states: d,
        num_actions: k,
        values,
    }
}

fn pick(row: &[f64], band: f64, tie: TieBreak) -> ActionId {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut near = row.iter().enumerate().filter(|(_, &q)| q >= best - band).map(|(a, _)| a);
    match tie {
        TieBreak::Lowest => near.next(),
        TieBreak::Highest => near.next_back(),
    }
    .expect("at least one action attains the maximum")
}

fn value_iteration(env: &Environment, r: &[f64], tol: f64) -> Vec<f64> {
    let d = env.num_states();
    let g = env.gamma();
    let mut v = vec![0.0; d];
    let mut next = vec![0.0; d];
    for _ in 0..MAX_VI_ITERS {
        let mut residual = 0.0f64;
        for s in 0..d {
            let best = (0..env.num_actions())
                .map(|a| env.expected_next(a, s, &v))
                .fold(f64::NEG_INFINITY, f64::max);
            next[s] = r[s] + g * best;
            residual = residual.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            break;
        }
    }
    v
}

fn greedy(env: &Environment, v: &[f64], band: f64, tie: TieBreak) -> Policy {
    let table = continuation_table(env, v);
    Policy((0..env.num_states()).map(|s| pick(table.state_row(s), band, tie)).collect())
}

fn tie_band(tol: f64, v: &[f64]) -> f64 {
    tol * v.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

/// Optimal policy together with its exact values.
pub fn solve_optimal_values(
    env: &Environment,
    r: &[f64],
    tol: f64,
    tie: TieBreak,
) -> Result<(Policy, Vec<f64>)> {
    env.expect(r)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let v = value_iteration(env, r, tol);
    let mut pi = greedy(env, &v, tie_band(tol, &v), tie);
    // Exact evaluation pass so that tie-breaking is decided on V_π rather than
    // on the truncated value-iteration iterate.
    let mut v_pi = policy_values(env, &pi, r)?;
    for _ in 0..MAX_POLISH_ITERS {
        let next = greedy(env, &v_pi, tie_band(tol, &v_pi), tie);
        if next == pi {
            break;
        }
        pi = next;
        v_pi = policy_values(env, &pi, r)?;
    }
    Ok((pi, v_pi))
}

/// Deterministic optimal policy with lowest-action-id tie-breaking.
pub fn solve_optimal(env: &Environment, r: &[f64], tol: f64) -> Result<Policy> {
    solve_optimal_values(env, r, tol, TieBreak::Lowest).map(|(pi, _)| pi)
}

pub fn solve_optimal_with(env: &Environment, r: &[f64], tol: f64, tie: TieBreak) -> Result<Policy> {
    solve_optimal_values(env, r, tol, tie).map(|(pi, _)| pi)
}

/// All `(s, a)` with `Q(s, a) ≥ max_b Q(s, b) - tol` under the optimal values.
pub fn optimal_set(env: &Environment, r: &[f64], tol: f64) -> Result<BTreeSet<(usize, ActionId)>> {
    let (_, v) = solve_optimal_values(env, r, DEFAULT_VI_TOL.min(tol), TieBreak::Lowest)?;
    let table = continuation_table(env, &v);
    let mut set = BTreeSet::new();
    for s in 0..env.num_states() {
        let row = table.state_row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, &q) in row.iter().enumerate() {
            if q >= best - tol {
                set.insert((s, a));
            }
        }
    }
    Ok(set)
}

/// Bit `a` of entry `s` is set when action `a` is optimal at `s`, judged on
/// value-iteration values run to `vi_tol` with a tie band of
/// `band · max(1, ‖V‖∞)`. Needs at most 32 actions.
pub fn optimal_action_masks(env: &Environment, r: &[f64], vi_tol: f64, band: f64) -> Result<Vec<u32>> {
    env.expect(r)?;
    if env.num_actions() > 32 {
        return Err(Error::Domain("action masks hold at most 32 actions".into()));
    }
    let v = value_iteration(env, r, vi_tol);
    let band = tie_band(band, &v);
    let k = env.num_actions();
    let mut q = vec![0.0; k];
    Ok((0..env.num_states())
        .map(|s| {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = env.expected_next(a, s, &v);
            }
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            q.iter()
                .enumerate()
                .filter(|(_, &x)| x >= best - band)
                .fold(0u32, |m, (a, _)| m | (1 << a))
        })
        .collect())
}

/// Sparse `P_π(s, ·) - P_a(s, ·)` for every `a ≠ π(s)` whose dynamics differ.
pub(crate) fn difference_rows(env: &Environment, pi: &Policy) -> Vec<(usize, ActionId, SparseRow)> {
    let mut out = Vec::new();
    for s in 0..env.num_states() {
        let own = env.sparse_row(pi.action(s), s);
        for a in (0..env.num_actions()).filter(|&a| a != pi.action(s)) {
            let other = env.sparse_row(a, s);
            let mut diff: BTreeMap<usize, f64> = BTreeMap::new();
            for &(t, p) in own {
                *diff.entry(t).or_insert(0.0) += p;
            }
            for &(t, p) in other {
                *diff.entry(t).or_insert(0.0) -= p;
            }
            let diff: SparseRow = diff.into_iter().filter(|&(_, x)| x != 0.0).collect();
            if !diff.is_empty() {
                out.push((s, a, diff));
            }
        }
    }
    out
}

/// Rows of `(P_π - P_a)(I - γP_π)^{-1}` for `a ≠ π(s)`; `π` is optimal for
/// `R` iff every row satisfies `w · R ≥ 0`. Rows that vanish are dropped.
pub fn ng_russell_constraints(env: &Environment, pi: &Policy) -> Result<Vec<ConstraintRow>> {
    let inv = resolvent(env, pi)?;
    let d = env.num_states();
    let mut rows = Vec::new();
    for (state, action, diff) in difference_rows(env, pi) {
        let mut coeffs = vec![0.0; d];
        for &(k, x) in &diff {
            for (j, c) in coeffs.iter_mut().enumerate() {
                *c += x * inv[(k, j)];
            }
        }
        if coeffs.iter().any(|c| c.abs() >= ZERO_ROW_TOL) {
            rows.push(ConstraintRow {
                state,
                action,
                coeffs,
            });
        }
    }
    Ok(rows)
}

/// Whether `π` is optimal for `R`: every optimality row evaluates to at least `-tol`.
pub fn is_optimal(env: &Environment, pi: &Policy, r: &[f64], tol: f64) -> Result<bool> {
    let v = policy_values(env, pi, r)?;
    Ok(difference_rows(env, pi)
        .iter()
        .all(|(_, _, diff)| diff.iter().map(|&(k, x)| x * v[k]).sum::<f64>() >= -tol))
}
