//! Identification with an experimenter free to build any dynamics.
//!
//! Stage one runs knockout tournaments on "stay or swap" environments to
//! find a best and a worst state. Stage two offers every other state a
//! gamble between the two extremes and bisects each gamble probability in
//! parallel, one environment per halving.

use serde::{Deserialize, Serialize};

use crate::agent::PolicyOracle;
use crate::error::{Error, Result};
use crate::mdp::{ActionId, Environment, Policy};

/// Discount of every constructed environment.
pub const OMNI_GAMMA: f64 = 0.8;

const STAY: ActionId = 0;
const MOVE: ActionId = 1;

fn two_actions() -> Vec<String> {
    vec!["a1".into(), "a2".into()]
}

/// `a1` stays put; `a2` swaps the two states of each designated pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonEnvironment {
    pub env: Environment,
    pub pairs: Vec<(usize, usize)>,
}

impl ComparisonEnvironment {
    pub fn new(num_states: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut swap: Vec<usize> = (0..num_states).collect();
        let mut used = vec![false; num_states];
        for &(s, t) in &pairs {
            if s == t || s >= num_states || t >= num_states || used[s] || used[t] {
                return Err(Error::Domain(format!("invalid pair ({s}, {t})")));
            }
            used[s] = true;
            used[t] = true;
            swap[s] = t;
            swap[t] = s;
        }
        let stay: Vec<usize> = (0..num_states).collect();
        let env = Environment::deterministic(two_actions(), &[stay, swap], OMNI_GAMMA)?;
        Ok(ComparisonEnvironment { env, pairs })
    }
}

/// Sinks at `s_min` and `s_max`; from any other state `s`, `a1` reaches
/// `s_min` with probability `α_s` and `s_max` otherwise, and `a2` stays.
#[derive(Clone, Debug, PartialEq)]
pub struct GambleEnvironment {
    pub env: Environment,
    pub s_min: usize,
    pub s_max: usize,
    pub alphas: Vec<f64>,
}

impl GambleEnvironment {
    /// `alphas` is indexed by state; entries at the sinks are ignored.
    pub fn new(s_min: usize, s_max: usize, alphas: Vec<f64>) -> Result<Self> {
        let d = alphas.len();
        if s_min >= d || s_max >= d || s_min == s_max {
            return Err(Error::Domain(format!("invalid sinks ({s_min}, {s_max})")));
        }
        let mut gamble = vec![0.0; d * d];
        let mut stay = vec![0.0; d * d];
        for s in 0..d {
            stay[s * d + s] = 1.0;
            if s == s_min || s == s_max {
                gamble[s * d + s] = 1.0;
                continue;
            }
            let a = alphas[s];
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!("gamble probability {a} outside [0, 1]")));
            }
            gamble[s * d + s_min] += a;
            gamble[s * d + s_max] += 1.0 - a;
        }
        let env = Environment::from_flat(two_actions(), vec![gamble, stay], OMNI_GAMMA)?;
        Ok(GambleEnvironment {
            env,
            s_min,
            s_max,
            alphas,
        })
    }
}

/// One experiment of the audit transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub environment: Environment,
    pub observed_policy: Policy,
}

fn query<O: PolicyOracle>(oracle: &mut O, env: &Environment, log: &mut Vec<TranscriptEntry>) -> Result<Policy> {
    let pi = oracle.respond(env)?;
    pi.validate(env)?;
    log.push(TranscriptEntry {
        environment: env.clone(),
        observed_policy: pi.clone(),
    });
    Ok(pi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extreme {
    Max,
    Min,
}

fn check_oracle<O: PolicyOracle>(oracle: &O, states: impl IntoIterator<Item = usize>) -> Result<usize> {
    let d = oracle.num_states();
    if let Some(s) = states.into_iter().find(|&s| s >= d) {
        return Err(Error::DimensionMismatch { expected: d, got: s + 1 });
    }
    Ok(d)
}

/// Knockout tournament over `candidates`; returns a state attaining the
/// maximum (or minimum) hidden reward among them, plus the experiments run.
pub fn find_extreme_state<O: PolicyOracle>(
    oracle: &mut O,
    candidates: &[usize],
    mode: Extreme,
) -> Result<(usize, Vec<TranscriptEntry>)> {
    if candidates.is_empty() {
        return Err(Error::Domain("no candidate states".into()));
    }
    let d = check_oracle(oracle, candidates.iter().copied())?;
    let mut alive = candidates.to_vec();
    let mut log = Vec::new();
    while alive.len() > 1 {
        let pairs: Vec<(usize, usize)> = alive.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let cmp = ComparisonEnvironment::new(d, pairs.clone())?;
        let pi = query(oracle, &cmp.env, &mut log)?;
        let mut next = Vec::with_capacity(alive.len().div_ceil(2));
        for &(s, t) in &pairs {
            // staying at s reveals R(s) >= R(t); moving reveals R(s) <= R(t)
            let s_at_least_t = pi.action(s) == STAY;
            next.push(match (mode, s_at_least_t) {
                (Extreme::Max, true) | (Extreme::Min, false) => s,
                _ => t,
            });
        }
        if alive.len() % 2 == 1 {
            next.push(*alive.last().expect("odd length"));
        }
        alive = next;
    }
    Ok((alive[0], log))
}

/// Per-state gamble probabilities from the bisection stage.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSearch {
    /// Midpoints of the final intervals; 1 at `s_min`, 0 at `s_max`.
    pub alphas: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub transcript: Vec<TranscriptEntry>,
}

/// Number of halvings that brings every interval width to at most `epsilon`.
pub fn bisection_rounds(epsilon: f64) -> usize {
    (1.0 / epsilon).log2().ceil().max(0.0) as usize
}

/// Bisects, for every state other than the two sinks, the `α*` with
/// `R(s) = α* R(s_min) + (1 - α*) R(s_max)`; all searches share each experiment.
pub fn binary_search_alphas<O: PolicyOracle>(
    oracle: &mut O,
    s_min: usize,
    s_max: usize,
    epsilon: f64,
) -> Result<AlphaSearch> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if s_min == s_max {
        return Err(Error::Domain("s_min and s_max coincide".into()));
    }
    let d = check_oracle(oracle, [s_min, s_max])?;
    let mut intervals = vec![(0.0, 1.0); d];
    intervals[s_min] = (1.0, 1.0);
    intervals[s_max] = (0.0, 0.0);
    let mut log = Vec::new();
    for _ in 0..bisection_rounds(epsilon) {
        let probes: Vec<f64> = intervals.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
        let gamble = GambleEnvironment::new(s_min, s_max, probes.clone())?;
        let pi = query(oracle, &gamble.env, &mut log)?;
        for s in (0..d).filter(|&s| s != s_min && s != s_max) {
            // the gamble is worth at least R(s) exactly when probe <= α*
            if pi.action(s) == STAY {
                intervals[s].0 = probes[s];
            } else {
                intervals[s].1 = probes[s];
            }
        }
    }
    let alphas = intervals.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    Ok(AlphaSearch {
        alphas,
        intervals,
        transcript: log,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentificationResult {
    /// `R̂(s_min) = 0`, `R̂(s_max) = 1`, `R̂(s) = 1 - α_s` elsewhere.
    pub estimate: Vec<f64>,
    pub s_min: usize,
    pub s_max: usize,
    pub intervals: Vec<(f64, f64)>,
    pub experiments_used: usize,
    pub transcript: Vec<TranscriptEntry>,
}

/// `2⌈log₂ d⌉ + ⌈log₂(1/ε)⌉`.
pub fn experiment_bound(d: usize, epsilon: f64) -> usize {
    let tournament = if d <= 1 { 0 } else { (d as f64).log2().ceil() as usize };
    2 * tournament + bisection_rounds(epsilon)
}

/// Full two-stage identification to canonical sup-norm accuracy `epsilon`.
pub fn identify<O: PolicyOracle>(oracle: &mut O, epsilon: f64) -> Result<IdentificationResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let d = oracle.num_states();
    if d == 0 {
        return Err(Error::Domain("oracle has no states".into()));
    }
    if d == 1 {
        return Ok(IdentificationResult {
            estimate: vec![0.0],
            s_min: 0,
            s_max: 0,
            intervals: vec![(0.0, 0.0)],
            experiments_used: 0,
            transcript: Vec::new(),
        });
    }
    let all: Vec<usize> = (0..d).collect();
    let (s_max, mut transcript) = find_extreme_state(oracle, &all, Extreme::Max)?;
    let (mut s_min, log) = find_extreme_state(oracle, &all, Extreme::Min)?;
    transcript.extend(log);
    if s_min == s_max {
        // only possible for a constant reward, where any answer is acceptable
        s_min = usize::from(s_max == 0);
    }
    let search = binary_search_alphas(oracle, s_min, s_max, epsilon)?;
    transcript.extend(search.transcript);
    let estimate = search.alphas.iter().map(|a| 1.0 - a).collect();
    Ok(IdentificationResult {
        estimate,
        s_min,
        s_max,
        intervals: search.intervals,
        experiments_used: transcript.len(),
        transcript,
    })
}

/// Presents two-action environments to an oracle that expects `total`
/// actions: extra actions copy the dynamics of `a2`, and any extra action
/// chosen by the oracle is reported as `a2`.
pub struct WideActionOracle<O> {
    inner: O,
    total: usize,
}

impl<O: PolicyOracle> WideActionOracle<O> {
    pub fn new(inner: O, total: usize) -> Result<Self> {
        if total < 2 {
            return Err(Error::Domain("need at least two actions".into()));
        }
        Ok(WideActionOracle { inner, total })
    }
}

/// Pads a two-action environment to `total` actions by duplicating `a2`.
pub fn widen_actions(env: &Environment, total: usize) -> Result<Environment> {
    if env.num_actions() != 2 || total < 2 {
        return Err(Error::Domain("widening expects a two-action environment".into()));
    }
    let d = env.num_states();
    let mut names = env.actions().to_vec();
    let mut flat: Vec<Vec<f64>> = (0..2).map(|a| (0..d).flat_map(|s| env.row(a, s).to_vec()).collect()).collect();
    for k in 2..total {
        names.push(format!("a{}", k + 1));
        flat.push(flat[1].clone());
    }
    Environment::from_flat(names, flat, env.gamma())
}

impl<O: PolicyOracle> PolicyOracle for WideActionOracle<O> {
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn respond(&mut self, env: &Environment) -> Result<Policy> {
        let wide = widen_actions(env, self.total)?;
        let pi = self.inner.respond(&wide)?;
        Ok(Policy::new(pi.actions().iter().map(|&a| a.min(MOVE)).collect()))
    }
}
