//! Simulated agent holding the hidden reward.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{solve_optimal_with, ActionId, Environment, PartialPolicy, Policy, TieBreak, DEFAULT_VI_TOL};
use crate::reward::{Bounds, Reward};

/// Anything that answers an environment with an optimal policy.
pub trait PolicyOracle {
    fn num_states(&self) -> usize;

    fn respond(&mut self, env: &Environment) -> Result<Policy>;
}

/// Perfectly rational agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    hidden_reward: Reward,
    pub tie_break: TieBreak,
    pub tol: f64,
}

impl Agent {
    pub fn new(hidden_reward: Reward, bounds: &Bounds) -> Result<Self> {
        if !hidden_reward.is_within(bounds) {
            return Err(Error::Domain("hidden reward outside the reward box".into()));
        }
        Ok(Self::unbounded(hidden_reward))
    }

    /// Agent without a box check, for omnipotent experiments on arbitrary rewards.
    pub fn unbounded(hidden_reward: Reward) -> Self {
        Agent {
            hidden_reward,
            tie_break: TieBreak::Lowest,
            tol: DEFAULT_VI_TOL,
        }
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn hidden_reward(&self) -> &Reward {
        &self.hidden_reward
    }

    pub fn respond_policy(&self, env: &Environment) -> Result<Policy> {
        if env.num_states() != self.hidden_reward.len() {
            return Err(Error::DimensionMismatch {
                expected: self.hidden_reward.len(),
                got: env.num_states(),
            });
        }
        solve_optimal_with(env, &self.hidden_reward, self.tol, self.tie_break)
    }

    /// Samples `num_traj` trajectories of `horizon` steps, starting from
    /// `start_dist` draws and following [`Agent::respond_policy`].
    pub fn respond_trajectories(
        &self,
        env: &Environment,
        num_traj: usize,
        horizon: usize,
        start_dist: &[f64],
        seed: u64,
    ) -> Result<Vec<Trajectory>> {
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if start_dist.len() != env.num_states() {
            return Err(Error::DimensionMismatch {
                expected: env.num_states(),
                got: start_dist.len(),
            });
        }
        let total: f64 = start_dist.iter().sum();
        if start_dist.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("start distribution must be nonnegative and sum to 1".into()));
        }
        let pi = self.respond_policy(env)?;
        let start = WeightedIndex::new(start_dist).map_err(|e| Error::Domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env_id = env.fingerprint();
        let mut out = Vec::with_capacity(num_traj);
        for _ in 0..num_traj {
            let mut s = start.sample(&mut rng);
            let mut steps = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let a = pi.action(s);
                steps.push((s, a));
                if t + 1 < horizon {
                    s = step(env, a, s, &mut rng);
                }
            }
            out.push(Trajectory { env_id, steps });
        }
        Ok(out)
    }
}

fn step(env: &Environment, a: ActionId, s: usize, rng: &mut ChaCha8Rng) -> usize {
    let row = env.sparse_row(a, s);
    if let [(t, _)] = row {
        return *t;
    }
    let dist = WeightedIndex::new(row.iter().map(|&(_, p)| p)).expect("rows are stochastic");
    row[dist.sample(rng)].0
}

impl PolicyOracle for Agent {
    fn num_states(&self) -> usize {
        self.hidden_reward.len()
    }

    fn respond(&mut self, env: &Environment) -> Result<Policy> {
        self.respond_policy(env)
    }
}

pub fn uniform_start(num_states: usize) -> Vec<f64> {
    vec![1.0 / num_states as f64; num_states]
}

/// Sequence of `(state, action)` pairs observed in one environment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub env_id: u64,
    pub steps: Vec<(usize, ActionId)>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Partial policy over the visited states.
    pub fn partial_policy(&self) -> Result<PartialPolicy> {
        let mut pp = PartialPolicy::new();
        for &(s, a) in &self.steps {
            if let Some(prev) = pp.insert(s, a) {
                return Err(Error::InconsistentTrajectories {
                    state: s,
                    first: prev,
                    second: a,
                });
            }
        }
        Ok(pp)
    }
}

/// Trajectories as a JSON list of `[state, action]` pairs per trajectory.
pub fn trajectories_json(trajectories: &[Trajectory]) -> serde_json::Value {
    serde_json::Value::Array(
        trajectories
            .iter()
            .map(|t| serde_json::to_value(&t.steps).expect("pairs serialize"))
            .collect(),
    )
}
