//! Adaptive greedy selection of maze experiments and the non-adaptive
//! baselines.
//!
//! A candidate environment is scored by its worst case over a cloud of
//! rewards drawn from the current consistent set: for each sample `R` the
//! agent would answer with some `π_R`, and observing `π_R` eliminates every
//! sample for which `π_R` is not optimal. The round commits the candidate
//! whose smallest eliminated fraction is largest.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::{uniform_start, Agent, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{eliminated_by_policy, hit_and_run_sample, ConsistentSet, SampleCloud, DEFAULT_BURN_IN, DEFAULT_THINNING};
use crate::gridworld::{Maze, MazeDistribution, MazeUniverse};
use crate::mdp::{optimal_action_masks, Environment, PartialPolicy, Policy};
use crate::reward::Bounds;
use crate::seed::derive_seed;

/// Value-iteration tolerance used when scoring candidates.
pub const SCORE_VI_TOL: f64 = 1e-12;
/// Relative tie band when deciding which actions are optimal for a sample.
pub const SCORE_TIE_BAND: f64 = 1e-9;

const STREAM_CANDIDATES: u64 = 1;
const STREAM_CLOUD: u64 = 2;
const STREAM_TRAJECTORIES: u64 = 3;
const STREAM_MAZES: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    #[default]
    Policy,
    Trajectory,
}

/// How trajectories are sampled in trajectory mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySettings {
    pub num_traj: usize,
    /// `None` means three steps per state.
    pub horizon: Option<usize>,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        TrajectorySettings {
            num_traj: 10,
            horizon: None,
        }
    }
}

impl TrajectorySettings {
    pub fn horizon_for(&self, num_states: usize) -> usize {
        self.horizon.unwrap_or(3 * num_states)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSettings {
    pub mode: ObservationMode,
    pub trajectories: TrajectorySettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Policy(Policy),
    Trajectories(Vec<Trajectory>),
}

/// A committed experiment and the policy whose constraints it contributed.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub env: Environment,
    pub maze: Option<Maze>,
    pub observation: Observation,
    pub policy: Policy,
}

/// Bookkeeping for one committed round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub chosen_env_id: u64,
    pub candidate_index: Option<usize>,
    /// Worst-case eliminated fraction of the chosen candidate.
    pub score: Option<f64>,
    /// Fraction of the round's cloud eliminated by the actual observation.
    pub est_gain: Option<f64>,
    /// Estimated eliminated fraction of the box after this round.
    pub f_estimate: Option<f64>,
    pub hidden_retained: bool,
    pub wall_clock_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentLog {
    experiments: Vec<Experiment>,
    set: ConsistentSet,
    rounds: Vec<RoundRecord>,
}

impl ExperimentLog {
    pub fn new(dim: usize, bounds: Bounds) -> Result<Self> {
        Ok(ExperimentLog {
            experiments: Vec::new(),
            set: ConsistentSet::empty_set(dim, bounds)?,
            rounds: Vec::new(),
        })
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn set(&self) -> &ConsistentSet {
        &self.set
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    /// Latest f estimate, 0 before any round.
    pub fn f_estimate(&self) -> f64 {
        self.rounds.iter().rev().find_map(|r| r.f_estimate).unwrap_or(0.0)
    }

    /// `(environment, policy)` pairs of the first `rounds` experiments.
    pub fn policy_pairs(&self, rounds: usize) -> Vec<(Environment, Policy)> {
        self.experiments[..rounds.min(self.len())]
            .iter()
            .map(|e| (e.env.clone(), e.policy.clone()))
            .collect()
    }

    pub fn commit(&mut self, experiment: Experiment, record: RoundRecord) -> Result<()> {
        self.set = self.set.add_experiment(&experiment.env, &experiment.policy)?;
        self.experiments.push(experiment);
        self.rounds.push(record);
        Ok(())
    }
}

/// Full policy that follows the observed actions and takes action 0 elsewhere.
pub fn trajectory_proxy(env: &Environment, trajectories: &[Trajectory]) -> Result<Policy> {
    let mut merged = PartialPolicy::new();
    for traj in trajectories {
        for &(s, a) in &traj.steps {
            if s >= env.num_states() || a >= env.num_actions() {
                return Err(Error::InvalidPolicy(format!("step ({s}, {a}) outside the environment")));
            }
            if let Some(prev) = merged.insert(s, a) {
                return Err(Error::InconsistentTrajectories {
                    state: s,
                    first: prev,
                    second: a,
                });
            }
        }
    }
    Ok(merged.complete(env.num_states()))
}

/// Queries the agent and returns what was seen plus the policy to constrain with.
pub fn observe(agent: &Agent, env: &Environment, settings: &ObservationSettings, seed: u64) -> Result<(Observation, Policy)> {
    match settings.mode {
        ObservationMode::Policy => {
            let pi = agent.respond_policy(env)?;
            Ok((Observation::Policy(pi.clone()), pi))
        }
        ObservationMode::Trajectory => {
            let d = env.num_states();
            let trajs = agent.respond_trajectories(
                env,
                settings.trajectories.num_traj,
                settings.trajectories.horizon_for(d),
                &uniform_start(d),
                seed,
            )?;
            let proxy = trajectory_proxy(env, &trajs)?;
            Ok((Observation::Trajectories(trajs), proxy))
        }
    }
}

/// Worst-case value of a candidate over a sample cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    /// Smallest eliminated fraction over the answers the cloud predicts.
    pub eliminated: f64,
    /// Smallest surprisal `Σ_s -ln p_s(π(s))` over the same answers, where
    /// `p_s(a)` is the fraction of samples for which `a` is optimal at `s`.
    /// Once the cloud splits into singletons the counts stop resolving cell
    /// sizes and this product estimate orders the candidates instead.
    pub surprisal: f64,
}

impl Score {
    pub const WORST: Score = Score {
        eliminated: f64::NEG_INFINITY,
        surprisal: f64::NEG_INFINITY,
    };

    /// Lexicographic comparison, eliminated fraction first.
    pub fn beats(&self, other: &Score) -> bool {
        self.eliminated > other.eliminated || (self.eliminated == other.eliminated && self.surprisal > other.surprisal)
    }
}

/// Worst case of `env` over `cloud`. The search stops early once the running
/// minimum can no longer beat `stop_at` and then returns that running minimum.
pub fn score_candidate(env: &Environment, cloud: &SampleCloud, stop_at: &Score) -> Result<Score> {
    if cloud.is_empty() {
        return Err(Error::Domain("empty sample cloud".into()));
    }
    let d = env.num_states();
    if cloud.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: cloud.dim() });
    }
    let n = cloud.len();
    let mut masks = Vec::with_capacity(n * d);
    for r in cloud.iter() {
        masks.extend(optimal_action_masks(env, r, SCORE_VI_TOL, SCORE_TIE_BAND)?);
    }
    let mut support = vec![[0usize; 32]; d];
    for m in masks.chunks(d) {
        for (s, &bits) in m.iter().enumerate() {
            for (a, c) in support[s].iter_mut().enumerate() {
                *c += (bits >> a & 1) as usize;
            }
        }
    }
    // the agent's answer for each sample: lowest optimal action per state
    let mut groups: HashMap<Vec<u8>, (usize, usize)> = HashMap::new();
    for (j, m) in masks.chunks(d).enumerate() {
        let pi: Vec<u8> = m.iter().map(|&bits| bits.trailing_zeros() as u8).collect();
        groups.entry(pi).or_insert((0, j)).0 += 1;
    }
    let mut order: Vec<(Vec<u8>, (usize, usize))> = groups.into_iter().collect();
    // common answers first: they tend to eliminate least, so pruning kicks in early
    order.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let mut worst = Score {
        eliminated: 1.0,
        surprisal: f64::INFINITY,
    };
    for (pi, _) in order {
        let eliminated = masks
            .chunks(d)
            .filter(|m| m.iter().zip(&pi).any(|(&bits, &a)| bits & (1 << a) == 0))
            .count();
        let surprisal: f64 = pi
            .iter()
            .enumerate()
            .map(|(s, &a)| -(support[s][a as usize] as f64 / n as f64).ln())
            .sum();
        worst.eliminated = worst.eliminated.min(eliminated as f64 / n as f64);
        worst.surprisal = worst.surprisal.min(surprisal);
        if !worst.beats(stop_at) {
            break;
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub score: Score,
}

/// Arg-max of [`score_candidate`]; remaining ties go to the lowest index.
pub fn choose_candidate(candidates: &[Environment], cloud: &SampleCloud) -> Result<Choice> {
    if candidates.is_empty() {
        return Err(Error::Domain("no candidate environments".into()));
    }
    let mut best = Choice {
        index: 0,
        score: score_candidate(&candidates[0], cloud, &Score::WORST)?,
    };
    for (index, env) in candidates.iter().enumerate().skip(1) {
        let score = score_candidate(env, cloud, &best.score)?;
        if score.beats(&best.score) {
            best = Choice { index, score };
        }
    }
    Ok(best)
}

/// Picks a candidate against `cloud` (or candidate 0 without one), queries
/// the agent and commits the observation.
pub fn greedy_round(
    log: &mut ExperimentLog,
    candidates: &[Environment],
    cloud: Option<&SampleCloud>,
    agent: &Agent,
    observation: &ObservationSettings,
    seed: u64,
) -> Result<usize> {
    greedy_round_with_mazes(log, candidates, None, cloud, agent, observation, seed)
}

fn greedy_round_with_mazes(
    log: &mut ExperimentLog,
    candidates: &[Environment],
    mazes: Option<&[Maze]>,
    cloud: Option<&SampleCloud>,
    agent: &Agent,
    observation: &ObservationSettings,
    seed: u64,
) -> Result<usize> {
    let start = Instant::now();
    let choice = match cloud {
        Some(cloud) => Some(choose_candidate(candidates, cloud)?),
        None if candidates.is_empty() => return Err(Error::Domain("no candidate environments".into())),
        None => None,
    };
    let index = choice.map_or(0, |c| c.index);
    let env = &candidates[index];
    let (obs, policy) = observe(agent, env, observation, seed)?;
    let est_gain = cloud.map(|c| eliminated_by_policy(env, &policy, c)).transpose()?;
    let f_estimate = est_gain.map(|g| 1.0 - (1.0 - log.f_estimate()) * (1.0 - g));
    let experiment = Experiment {
        env: env.clone(),
        maze: mazes.map(|m| m[index].clone()),
        observation: obs,
        policy,
    };
    let next = log.set().add_experiment(env, &experiment.policy)?;
    let record = RoundRecord {
        round: log.len() + 1,
        chosen_env_id: env.fingerprint(),
        candidate_index: Some(index),
        score: choice.map(|c| c.score.eliminated),
        est_gain,
        f_estimate,
        hidden_retained: next.contains(agent.hidden_reward()),
        wall_clock_ms: 0.0,
    };
    log.commit(experiment, record)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    log.rounds.last_mut().expect("just committed").wall_clock_ms = elapsed;
    Ok(index)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub budget: usize,
    /// Candidate environments per round.
    pub candidates: usize,
    /// Reward samples per round.
    pub samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub observation: ObservationSettings,
    pub seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            budget: 25,
            candidates: 10,
            samples: 1000,
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
            observation: ObservationSettings::default(),
            seed: 0,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 || self.samples == 0 || self.thinning == 0 {
            return Err(Error::Domain("candidates, samples and thinning must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_agent(agent: &Agent, universe: &MazeUniverse) -> Result<()> {
    if agent.hidden_reward().len() != universe.num_states() {
        return Err(Error::DimensionMismatch {
            expected: universe.num_states(),
            got: agent.hidden_reward().len(),
        });
    }
    Ok(())
}

/// `config.budget` greedy rounds with candidates drawn fresh from `universe`
/// and a cloud resampled from the current consistent set every round. When
/// the set has lost its interior no cloud can be drawn; such rounds take
/// the first candidate and report no gain.
pub fn run_greedy(config: &GreedyConfig, universe: &MazeUniverse, agent: &Agent, bounds: Bounds) -> Result<ExperimentLog> {
    config.validate()?;
    check_agent(agent, universe)?;
    let mut log = ExperimentLog::new(universe.num_states(), bounds)?;
    for round in 0..config.budget {
        let mazes = (0..config.candidates)
            .map(|k| universe.sample(derive_seed(config.seed, STREAM_CANDIDATES, (round * config.candidates + k) as u64)))
            .collect::<Result<Vec<_>>>()?;
        let envs: Vec<Environment> = mazes.iter().map(Maze::compile).collect();
        let cloud_seed = derive_seed(config.seed, STREAM_CLOUD, round as u64);
        let cloud = match hit_and_run_sample(log.set(), config.samples, cloud_seed, config.burn_in, config.thinning) {
            Ok(cloud) => Some(cloud),
            Err(Error::EmptyInterior { .. }) => None,
            Err(e) => return Err(e),
        };
        let obs_seed = derive_seed(config.seed, STREAM_TRAJECTORIES, round as u64);
        greedy_round_with_mazes(&mut log, &envs, Some(&mazes), cloud.as_ref(), agent, &config.observation, obs_seed)?;
    }
    Ok(log)
}

/// `budget` rounds, each on a fresh maze from `universe`, no adaptivity.
pub fn run_nonadaptive(
    universe: &MazeUniverse,
    budget: usize,
    agent: &Agent,
    bounds: Bounds,
    observation: &ObservationSettings,
    seed: u64,
) -> Result<ExperimentLog> {
    check_agent(agent, universe)?;
    let mut log = ExperimentLog::new(universe.num_states(), bounds)?;
    for round in 0..budget {
        let start = Instant::now();
        let maze = universe.sample(derive_seed(seed, STREAM_MAZES, round as u64))?;
        let env = maze.compile();
        let (obs, policy) = observe(agent, &env, observation, derive_seed(seed, STREAM_TRAJECTORIES, round as u64))?;
        let next = log.set().add_experiment(&env, &policy)?;
        let record = RoundRecord {
            round: round + 1,
            chosen_env_id: env.fingerprint(),
            candidate_index: None,
            score: None,
            est_gain: None,
            f_estimate: None,
            hidden_retained: next.contains(agent.hidden_reward()),
            wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        log.commit(
            Experiment {
                env,
                maze: Some(maze),
                observation: obs,
                policy,
            },
            record,
        )?;
    }
    Ok(log)
}

/// Distribution used by a non-adaptive baseline.
pub fn baseline_universe(kind: MazeDistribution, n: usize, gamma: f64) -> MazeUniverse {
    MazeUniverse { n, gamma, dist: kind }
}
