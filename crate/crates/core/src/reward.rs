//! Reward vectors, behavioral equivalence and canonical representatives.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Environment;

/// Spans below this are treated as constant rewards.
pub const CONSTANT_SPAN_TOL: f64 = 1e-12;

/// Canonical reward components closer than this are considered equal.
pub const CANONICAL_EQ_TOL: f64 = 1e-9;

/// Discount used by [`distinguishing_environment`].
pub const DISTINGUISHER_GAMMA: f64 = 0.5;

/// Per-state reward vector `R ∈ ℝ^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reward(Vec<f64>);

impl Reward {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("reward entry {x} is not finite")));
        }
        Ok(Reward(values))
    }

    pub fn zeros(d: usize) -> Self {
        Reward(vec![0.0; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_within(&self, bounds: &Bounds) -> bool {
        self.0.iter().all(|&x| bounds.contains(x))
    }

    /// `αR + c·1`.
    pub fn affine(&self, alpha: f64, shift: f64) -> Reward {
        Reward(self.0.iter().map(|x| alpha * x + shift).collect())
    }
}

impl Deref for Reward {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<CanonicalReward> for Reward {
    fn from(c: CanonicalReward) -> Self {
        Reward(c.0)
    }
}

/// Per-coordinate box `[min, max]` containing the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::Domain(format!("degenerate box [{min}, {max}]")));
        }
        if min > 0.0 || max < 0.0 {
            return Err(Error::Domain(format!(
                "box [{min}, {max}] must contain the zero reward"
            )));
        }
        Ok(Bounds { min, max })
    }

    pub fn symmetric(r_max: f64) -> Result<Self> {
        Self::new(-r_max, r_max)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// Representative of a behavioral equivalence class: either all zeros, or
/// minimum exactly 0 and maximum exactly 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalReward(Vec<f64>);

impl CanonicalReward {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Accepts `values` if they are already canonical.
    pub fn try_new(values: Vec<f64>) -> Result<Self> {
        let r = Reward::new(values)?;
        let c = canonicalize(&r);
        let err = linf(&c.0, &r.0);
        if err > CANONICAL_EQ_TOL {
            return Err(Error::Domain("vector is not in canonical form".into()));
        }
        Ok(c)
    }
}

impl Deref for CanonicalReward {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn span(r: &[f64]) -> (f64, f64) {
    r.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// `(R - min R) / (max R - min R)`, or the zero vector for constant rewards.
pub fn canonicalize(r: &[f64]) -> CanonicalReward {
    if r.is_empty() {
        return CanonicalReward(Vec::new());
    }
    let (lo, hi) = span(r);
    if hi - lo < CONSTANT_SPAN_TOL {
        return CanonicalReward(vec![0.0; r.len()]);
    }
    let width = hi - lo;
    CanonicalReward(
        r.iter()
            .map(|&x| {
                // pin the extremes so min is exactly 0 and max exactly 1
                if x == lo {
                    0.0
                } else if x == hi {
                    1.0
                } else {
                    (x - lo) / width
                }
            })
            .collect(),
    )
}

fn same_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `‖[R] - [R̂]‖_∞`.
pub fn identification_error(true_r: &[f64], estimate: &[f64]) -> Result<f64> {
    same_dim(true_r, estimate)?;
    Ok(linf(&canonicalize(true_r), &canonicalize(estimate)))
}

pub fn behaviorally_equivalent(r1: &[f64], r2: &[f64], tol: f64) -> Result<bool> {
    Ok(identification_error(r1, r2)? <= tol)
}

/// Raw `‖R - R̂‖_∞`.
pub fn raw_error(true_r: &[f64], estimate: &[f64]) -> Result<f64> {
    same_dim(true_r, estimate)?;
    Ok(linf(true_r, estimate))
}

fn argmin_set(c: &[f64], target: f64) -> Vec<usize> {
    c.iter()
        .enumerate()
        .filter(|(_, &x)| (x - target).abs() <= CANONICAL_EQ_TOL)
        .map(|(s, _)| s)
        .collect()
}

fn go_to(d: usize, targets: [usize; 2], names: [&str; 2]) -> Result<Environment> {
    Environment::deterministic(
        names.iter().map(|n| n.to_string()).collect(),
        &[vec![targets[0]; d], vec![targets[1]; d]],
        DISTINGUISHER_GAMMA,
    )
}

/// Two-action environment on which `c1` and `c2` induce different optimal
/// sets. Cases are tried in order: differing minimal states, differing
/// maximal states, then the first interior component that differs.
pub fn distinguishing_environment(c1: &CanonicalReward, c2: &CanonicalReward) -> Result<Environment> {
    same_dim(c1, c2)?;
    let d = c1.len();
    if linf(c1, c2) <= CANONICAL_EQ_TOL {
        return Err(Error::NoDistinguisher);
    }

    for level in [0.0, 1.0] {
        let (s1, s2) = (argmin_set(c1, level), argmin_set(c2, level));
        if s1 == s2 {
            continue;
        }
        // orient so that `only` is extreme under one reward but not the other,
        // and `other` is extreme under the other one
        let (only, other) = match s1.iter().find(|s| !s2.contains(s)) {
            Some(&s) => (s, s2.first().copied()),
            None => {
                let s = *s2.iter().find(|s| !s1.contains(s)).expect("sets differ");
                (s, s1.first().copied())
            }
        };
        // for the zero-reward class there are no maximal states; the minimal
        // case always fires first in that situation
        let Some(other) = other else { continue };
        return go_to(d, [only, other], ["to_first", "to_second"]);
    }

    let zeros = argmin_set(c1, 0.0);
    let ones = argmin_set(c1, 1.0);
    let (Some(&s0), Some(&s1)) = (zeros.first(), ones.first()) else {
        return Err(Error::NoDistinguisher);
    };
    let s = (0..d)
        .find(|&s| (c1[s] - c2[s]).abs() > CANONICAL_EQ_TOL)
        .ok_or(Error::NoDistinguisher)?;
    let p = 0.5 * (c1[s] + c2[s]);
    let mut gamble = vec![0.0; d * d];
    let mut settle = vec![0.0; d * d];
    for from in 0..d {
        gamble[from * d + s1] += p;
        gamble[from * d + s0] += 1.0 - p;
        settle[from * d + s] = 1.0;
    }
    Environment::from_flat(
        vec!["settle".into(), "gamble".into()],
        vec![settle, gamble],
        DISTINGUISHER_GAMMA,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::optimal_set;

    fn canon(v: &[f64]) -> CanonicalReward {
        canonicalize(v)
    }

    #[test]
    fn canonicalize_examples() {
        let c = canonicalize(&[1.0, 2.0, 3.0, 4.0]);
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert!(linf(&c, &want) < 1e-15);
        assert_eq!(canonicalize(&[5.0, 5.0, 5.0]).values(), &[0.0, 0.0, 0.0]);
        assert_eq!(canonicalize(&[0.0, 1.0]).values(), &[0.0, 1.0]);
    }

    #[test]
    fn equivalence_examples() {
        let r = [0.3, -1.2, 4.0, 2.2];
        let shifted: Vec<f64> = r.iter().map(|x| 3.0 * x + 7.0).collect();
        assert!(behaviorally_equivalent(&r, &shifted, 1e-12).unwrap());
        assert!(!behaviorally_equivalent(&[0.0, 1.0], &[1.0, 0.0], 1e-9).unwrap());
        assert!(behaviorally_equivalent(&[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], 1e-12).unwrap());
        assert!(matches!(
            behaviorally_equivalent(&[1.0], &[1.0, 2.0], 1e-9),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn error_examples() {
        let r = [0.2, 1.5, -3.0];
        let doubled: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        assert_eq!(identification_error(&r, &doubled).unwrap(), 0.0);
        assert_eq!(identification_error(&[0.0, 1.0], &[0.0, 0.9]).unwrap(), 0.0);
        let e = identification_error(&[0.0, 0.5, 1.0], &[0.0, 0.6, 1.0]).unwrap();
        assert!((e - 0.1).abs() < 1e-12);
    }

    #[test]
    fn canonical_try_new() {
        assert!(CanonicalReward::try_new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(CanonicalReward::try_new(vec![0.0, 2.0]).is_err());
        assert!(CanonicalReward::try_new(vec![0.0, 0.0]).unwrap().is_zero());
    }

    #[test]
    fn bounds_must_contain_origin() {
        assert!(Bounds::new(-1.0, 1.0).is_ok());
        assert!(Bounds::new(1.0, 1.0).is_err());
        assert!(Bounds::new(0.5, 1.0).is_err());
        assert!(Reward::new(vec![0.5, -0.5]).unwrap().is_within(&Bounds::symmetric(1.0).unwrap()));
    }

    #[test]
    fn distinguisher_swapped_extremes() {
        let (c1, c2) = (canon(&[0.0, 1.0]), canon(&[1.0, 0.0]));
        let env = distinguishing_environment(&c1, &c2).unwrap();
        assert_ne!(optimal_set(&env, &c1, 1e-9).unwrap(), optimal_set(&env, &c2, 1e-9).unwrap());
    }

    #[test]
    fn distinguisher_interior_gamble() {
        let (c1, c2) = (canon(&[0.0, 0.3, 1.0]), canon(&[0.0, 0.7, 1.0]));
        let env = distinguishing_environment(&c1, &c2).unwrap();
        assert_eq!(env.actions()[1], "gamble");
        // gamble succeeds with probability 0.5
        assert!((env.prob(1, 0, 2) - 0.5).abs() < 1e-15);
        assert!((env.prob(1, 0, 0) - 0.5).abs() < 1e-15);
        let pi1 = crate::mdp::solve_optimal(&env, &c1, 1e-10).unwrap();
        let pi2 = crate::mdp::solve_optimal(&env, &c2, 1e-10).unwrap();
        assert!(pi1.actions().iter().all(|&a| a == 1));
        assert!(pi2.actions().iter().all(|&a| a == 0));
    }

    #[test]
    fn distinguisher_against_zero_class() {
        let (c1, c2) = (canon(&[2.0, 2.0, 2.0]), canon(&[0.0, 0.4, 1.0]));
        for (a, b) in [(&c1, &c2), (&c2, &c1)] {
            let env = distinguishing_environment(a, b).unwrap();
            assert_ne!(optimal_set(&env, a, 1e-9).unwrap(), optimal_set(&env, b, 1e-9).unwrap());
        }
    }

    #[test]
    fn distinguisher_rejects_equal() {
        let c = canon(&[0.0, 0.5, 1.0]);
        assert!(matches!(distinguishing_environment(&c, &c), Err(Error::NoDistinguisher)));
    }
}
