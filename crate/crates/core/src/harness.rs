//! Maze benchmark: scenario generation, algorithm runs, error curves and
//! CSV/JSON output.

use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::design::{run_greedy, run_nonadaptive, ExperimentLog, GreedyConfig, ObservationSettings};
use crate::error::{Error, Result};
use crate::geometry::{DEFAULT_BURN_IN, DEFAULT_THINNING};
use crate::gridworld::{MazeDistribution, MazeUniverse};
use crate::lp::{select_classic, select_generalized};
use crate::reward::{identification_error, raw_error, Bounds, Reward};
use crate::seed::derive_seed;
use crate::stats::{mean, std_error};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "IRL_EXP_THREADS";

pub const PAPER_LAMBDAS: [f64; 10] = [0.05, 0.1, 0.5, 1.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

const STREAM_SCENARIO: u64 = 10;
const STREAM_SWEEP_ENVS: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Greedy,
    RandUniform,
    RandVaried,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Greedy, Algorithm::RandUniform, Algorithm::RandVaried];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::RandUniform => "rand_uniform",
            Algorithm::RandVaried => "rand_varied",
        }
    }

    fn stream(&self) -> u64 {
        match self {
            Algorithm::Greedy => 11,
            Algorithm::RandUniform => 12,
            Algorithm::RandVaried => 13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub r_max: f64,
    pub high_states: usize,
    pub high_value: f64,
    pub low_states: usize,
    pub low_value: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub budget: usize,
    pub sims: usize,
    pub observation: ObservationSettings,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub candidates: usize,
    pub samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub sweep_envs: usize,
    pub sweep_lambdas: Vec<f64>,
    pub sweep_sims: usize,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let base = RunConfig {
            n: 6,
            r_max: 10.0,
            high_states: 1,
            high_value: 10.0,
            low_states: 5,
            low_value: 1.0,
            gamma: 0.8,
            lambda: 0.5,
            budget: 15,
            sims: 10,
            observation: ObservationSettings::default(),
            seed: 0,
            algorithms: Algorithm::ALL.to_vec(),
            candidates: 5,
            samples: 500,
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
            sweep_envs: 10,
            sweep_lambdas: vec![0.05, 0.5, 10.0],
            sweep_sims: 5,
        };
        match profile {
            Profile::Desk => base,
            Profile::Paper => RunConfig {
                n: 10,
                budget: 25,
                sims: 20,
                candidates: 10,
                samples: 1000,
                sweep_envs: 100,
                sweep_lambdas: PAPER_LAMBDAS.to_vec(),
                sweep_sims: 20,
                ..base
            },
        }
    }

    pub fn bounds(&self) -> Result<Bounds> {
        Bounds::symmetric(self.r_max)
    }

    pub fn num_states(&self) -> usize {
        self.n * self.n
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = self.bounds()?;
        if !bounds.contains(self.high_value) || !bounds.contains(self.low_value) {
            return Err(Error::Domain("scenario rewards fall outside the reward box".into()));
        }
        let needed = self.high_states + self.low_states;
        if needed > self.num_states() {
            return Err(Error::Placement { needed, cells: self.num_states() });
        }
        if !(self.lambda >= 0.0) || self.sweep_lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Domain("regularization must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn universe(&self, dist: MazeDistribution) -> MazeUniverse {
        MazeUniverse { n: self.n, gamma: self.gamma, dist }
    }

    fn greedy_config(&self, seed: u64) -> GreedyConfig {
        GreedyConfig {
            budget: self.budget,
            candidates: self.candidates,
            samples: self.samples,
            burn_in: self.burn_in,
            thinning: self.thinning,
            observation: self.observation,
            seed,
        }
    }

    pub fn scenario_seed(&self, sim: usize) -> u64 {
        derive_seed(self.seed, STREAM_SCENARIO, sim as u64)
    }
}

/// Hidden reward with `high_states` cells at `high_value`, `low_states` at
/// `low_value` and zero elsewhere, placed uniformly without replacement.
pub fn generate_scenario(config: &RunConfig, seed: u64) -> Result<(Reward, Agent)> {
    config.validate()?;
    let d = config.num_states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = sample(&mut rng, d, config.high_states + config.low_states).into_vec();
    let mut r = vec![0.0; d];
    for (k, &cell) in cells.iter().enumerate() {
        r[cell] = if k < config.high_states { config.high_value } else { config.low_value };
    }
    let reward = Reward::new(r)?;
    let agent = Agent::new(reward.clone(), &config.bounds()?)?;
    Ok((reward, agent))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub chosen_env_id: u64,
    pub est_gain: Option<f64>,
    pub f_estimate: Option<f64>,
    pub lp_error_linf: f64,
    pub lp_error_canonical: f64,
    pub hidden_retained: bool,
    pub wall_clock_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub sim: usize,
    pub hidden_reward: Reward,
    pub rounds: Vec<RoundMetrics>,
    /// First round after which the hidden reward left the consistent set.
    pub first_elimination: Option<usize>,
    pub log: ExperimentLog,
}

impl RunRecord {
    pub fn final_error(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.lp_error_linf)
    }
}

/// `(raw, canonical)` error of the selected reward after every round.
pub fn evaluate_log(log: &ExperimentLog, hidden: &[f64], lambda: f64, bounds: Bounds) -> Result<Vec<(f64, f64)>> {
    (1..=log.len())
        .map(|i| {
            let sel = select_generalized(&log.policy_pairs(i), lambda, bounds)?;
            Ok((raw_error(hidden, &sel.reward)?, identification_error(hidden, &sel.reward)?))
        })
        .collect()
}

/// Raw error of the reward selected from the whole log at each `lambda`.
pub fn final_errors_by_lambda(log: &ExperimentLog, hidden: &[f64], lambdas: &[f64], bounds: Bounds) -> Result<Vec<f64>> {
    let pairs = log.policy_pairs(log.len());
    lambdas
        .iter()
        .map(|&l| raw_error(hidden, &select_generalized(&pairs, l, bounds)?.reward))
        .collect()
}

pub fn run_simulation(config: &RunConfig, algorithm: Algorithm, sim: usize) -> Result<RunRecord> {
    let inner = || -> Result<RunRecord> {
        let (hidden, agent) = generate_scenario(config, config.scenario_seed(sim))?;
        let bounds = config.bounds()?;
        let seed = derive_seed(config.seed, algorithm.stream(), sim as u64);
        let log = match algorithm {
            Algorithm::Greedy => run_greedy(
                &config.greedy_config(seed),
                &config.universe(MazeDistribution::Varied),
                &agent,
                bounds,
            )?,
            Algorithm::RandUniform | Algorithm::RandVaried => {
                let dist = if algorithm == Algorithm::RandUniform {
                    MazeDistribution::uniform()
                } else {
                    MazeDistribution::Varied
                };
                run_nonadaptive(&config.universe(dist), config.budget, &agent, bounds, &config.observation, seed)?
            }
        };
        let mut rounds = Vec::with_capacity(log.len());
        for (i, rec) in log.rounds().iter().enumerate() {
            let start = Instant::now();
            let sel = select_generalized(&log.policy_pairs(i + 1), config.lambda, bounds)?;
            let lp_ms = start.elapsed().as_secs_f64() * 1e3;
            rounds.push(RoundMetrics {
                round: rec.round,
                chosen_env_id: rec.chosen_env_id,
                est_gain: rec.est_gain,
                f_estimate: rec.f_estimate,
                lp_error_linf: raw_error(&hidden, &sel.reward)?,
                lp_error_canonical: identification_error(&hidden, &sel.reward)?,
                hidden_retained: rec.hidden_retained,
                wall_clock_ms: rec.wall_clock_ms + lp_ms,
            });
        }
        let first_elimination = rounds.iter().find(|r| !r.hidden_retained).map(|r| r.round);
        Ok(RunRecord {
            algorithm,
            sim,
            hidden_reward: hidden,
            rounds,
            first_elimination,
            log,
        })
    };
    inner().map_err(|e| e.in_simulation(sim))
}

/// Thread pool sized by [`THREADS_ENV`] when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Domain(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Domain(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub round: usize,
    pub mean_error: f64,
    pub stderr_error: f64,
    pub mean_canonical_error: f64,
    pub stderr_canonical: f64,
    pub sims: usize,
}

pub struct Benchmark {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl Benchmark {
    pub fn final_mean(&self, algorithm: Algorithm) -> Option<f64> {
        self.summary
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .max_by_key(|r| r.round)
            .map(|r| r.mean_error)
    }
}

/// Every configured algorithm on `config.sims` simulations; simulation `i`
/// uses the same hidden reward for every algorithm.
pub fn run_benchmark(config: &RunConfig) -> Result<Benchmark> {
    config.validate()?;
    let jobs: Vec<(Algorithm, usize)> = config
        .algorithms
        .iter()
        .flat_map(|&a| (0..config.sims).map(move |s| (a, s)))
        .collect();
    let records = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(a, s)| run_simulation(config, a, s))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(&records);
    Ok(Benchmark { records, summary })
}

/// Per-algorithm, per-round mean and standard error across simulations.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut algorithms: Vec<Algorithm> = Vec::new();
    for r in records {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm);
        }
    }
    let mut rows = Vec::new();
    for alg in algorithms {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.algorithm == alg).collect();
        let max_round = runs.iter().map(|r| r.rounds.len()).max().unwrap_or(0);
        for round in 1..=max_round {
            let at: Vec<&RoundMetrics> = runs.iter().filter_map(|r| r.rounds.get(round - 1)).collect();
            let raw: Vec<f64> = at.iter().map(|m| m.lp_error_linf).collect();
            let canon: Vec<f64> = at.iter().map(|m| m.lp_error_canonical).collect();
            rows.push(SummaryRow {
                algorithm: alg,
                round,
                mean_error: mean(&raw),
                stderr_error: std_error(&raw),
                mean_canonical_error: mean(&canon),
                stderr_canonical: std_error(&canon),
                sims: at.len(),
            });
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepEntry {
    pub env_index: usize,
    pub env_id: u64,
    pub lambda: f64,
    pub mean_error: f64,
    pub stderr_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub best: SweepEntry,
}

/// Single-environment baseline: each of `config.sweep_envs` uniformly random
/// mazes, observed once, with the reward selected at each
/// `config.sweep_lambdas`; errors are averaged over `config.sweep_sims`
/// scenarios shared with the benchmark.
pub fn run_single_env_sweep(config: &RunConfig) -> Result<SweepResult> {
    config.validate()?;
    if config.sweep_envs == 0 || config.sweep_lambdas.is_empty() || config.sweep_sims == 0 {
        return Err(Error::Domain("sweep needs environments, lambdas and simulations".into()));
    }
    let bounds = config.bounds()?;
    let agents = (0..config.sweep_sims)
        .map(|sim| generate_scenario(config, config.scenario_seed(sim)))
        .collect::<Result<Vec<_>>>()?;
    let universe = config.universe(MazeDistribution::uniform());
    let per_env = thread_pool()?.install(|| {
        (0..config.sweep_envs)
            .into_par_iter()
            .map(|k| -> Result<Vec<SweepEntry>> {
                let env = universe.sample(derive_seed(config.seed, STREAM_SWEEP_ENVS, k as u64))?.compile();
                let mut errors = vec![Vec::with_capacity(agents.len()); config.sweep_lambdas.len()];
                for (sim, (hidden, agent)) in agents.iter().enumerate() {
                    let pi = agent.respond_policy(&env).map_err(|e| e.in_simulation(sim))?;
                    for (li, &lambda) in config.sweep_lambdas.iter().enumerate() {
                        let sel = select_classic(&env, &pi, lambda, bounds).map_err(|e| e.in_simulation(sim))?;
                        errors[li].push(raw_error(hidden, &sel.reward)?);
                    }
                }
                Ok(config
                    .sweep_lambdas
                    .iter()
                    .zip(&errors)
                    .map(|(&lambda, errs)| SweepEntry {
                        env_index: k,
                        env_id: env.fingerprint(),
                        lambda,
                        mean_error: mean(errs),
                        stderr_error: std_error(errs),
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let entries: Vec<SweepEntry> = per_env.into_iter().flatten().collect();
    let best = entries
        .iter()
        .fold(None::<&SweepEntry>, |best, e| match best {
            Some(b) if b.mean_error <= e.mean_error => Some(b),
            _ => Some(e),
        })
        .expect("nonempty sweep")
        .clone();
    Ok(SweepResult { entries, best })
}

#[derive(Serialize)]
struct RoundsRow<'a> {
    algorithm: &'a str,
    sim: usize,
    round: usize,
    chosen_env_id: u64,
    est_gain: Option<f64>,
    f_estimate: Option<f64>,
    lp_error_linf: f64,
    wall_clock_ms: f64,
    lp_error_canonical: f64,
    hidden_retained: bool,
}

/// One row per (algorithm, simulation, round). All columns except
/// `wall_clock_ms` are reproducible from the configuration.
pub fn write_rounds_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records {
        for m in &rec.rounds {
            w.serialize(RoundsRow {
                algorithm: rec.algorithm.name(),
                sim: rec.sim,
                round: m.round,
                chosen_env_id: m.chosen_env_id,
                est_gain: m.est_gain,
                f_estimate: m.f_estimate,
                lp_error_linf: m.lp_error_linf,
                wall_clock_ms: m.wall_clock_ms,
                lp_error_canonical: m.lp_error_canonical,
                hidden_retained: m.hidden_retained,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &sweep.entries {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Chosen mazes and observed policies of every run.
pub fn transcript_json(records: &[RunRecord]) -> serde_json::Value {
    let entries = records
        .iter()
        .flat_map(|rec| {
            rec.log.experiments().iter().enumerate().map(move |(i, e)| {
                serde_json::json!({
                    "algorithm": rec.algorithm.name(),
                    "sim": rec.sim,
                    "round": i + 1,
                    "env_id": e.env.fingerprint(),
                    "maze": e.maze,
                    "observed_policy": e.policy,
                })
            })
        })
        .collect();
    serde_json::Value::Array(entries)
}
