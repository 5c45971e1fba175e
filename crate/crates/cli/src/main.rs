use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repeated_irl::design::ObservationMode;
use repeated_irl::harness::{
    run_benchmark, run_single_env_sweep, transcript_json, write_rounds_csv, write_summary_csv, write_sweep_csv,
    Algorithm, Benchmark, Profile, RunConfig, SweepResult,
};
use repeated_irl::omnipotent::identify;
use repeated_irl::reward::identification_error;
use repeated_irl::{Agent, Reward};

#[derive(Parser)]
#[command(name = "repeated-irl", version, about = "Reward identification experiments on random mazes")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Preset sizes; individual flags override it
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: ProfileArg,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    sims: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Policy,
    Trajectory,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Uniform,
    Varied,
}

#[derive(Subcommand)]
enum Command {
    /// Identify a random reward with freely constructed environments
    Omnipotent {
        #[arg(long, default_value_t = 100)]
        states: usize,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
    },
    /// Greedy adaptive maze selection
    Greedy,
    /// Non-adaptive random mazes
    Baseline {
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Best single maze over the regularization grid
    Sweep,
    /// Greedy, both baselines and the sweep
    Bench,
}

fn config(common: &Common) -> RunConfig {
    let mut c = RunConfig::profile(match common.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    });
    c.seed = common.seed;
    if let Some(n) = common.grid_n {
        c.n = n;
    }
    if let Some(g) = common.gamma {
        c.gamma = g;
    }
    if let Some(l) = common.lambda {
        c.lambda = l;
    }
    if let Some(b) = common.budget {
        c.budget = b;
    }
    if let Some(s) = common.sims {
        c.sims = s;
    }
    if let Some(m) = common.mode {
        c.observation.mode = match m {
            ModeArg::Policy => ObservationMode::Policy,
            ModeArg::Trajectory => ObservationMode::Trajectory,
        };
    }
    c
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_benchmark(dir: &Path, bench: &Benchmark) -> Result<()> {
    write_rounds_csv(create(dir, "rounds.csv")?, &bench.records)?;
    write_summary_csv(create(dir, "summary.csv")?, &bench.summary)?;
    serde_json::to_writer(create(dir, "transcript.json")?, &transcript_json(&bench.records))?;
    for alg in Algorithm::ALL {
        if let Some(m) = bench.final_mean(alg) {
            println!("{:<13} final mean error {m:.4}", alg.name());
        }
    }
    for rec in &bench.records {
        if let Some(round) = rec.first_elimination {
            println!("{} sim {}: hidden reward eliminated in round {round}", rec.algorithm.name(), rec.sim);
        }
    }
    Ok(())
}

fn write_sweep(dir: &Path, sweep: &SweepResult) -> Result<()> {
    write_sweep_csv(create(dir, "sweep.csv")?, sweep)?;
    println!(
        "single env best    error {:.4} (env {}, lambda {})",
        sweep.best.mean_error, sweep.best.env_index, sweep.best.lambda
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = &cli.common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut cfg = config(&cli.common);
    match cli.command {
        Command::Omnipotent { states, epsilon } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.common.seed);
            let r: Vec<f64> = (0..states).map(|_| rng.gen_range(-cfg.r_max..=cfg.r_max)).collect();
            let mut agent = Agent::unbounded(Reward::new(r.clone())?);
            let res = identify(&mut agent, epsilon)?;
            serde_json::to_writer(create(out, "transcript.json")?, &res.transcript)?;
            println!(
                "experiments {} canonical error {:.6}",
                res.experiments_used,
                identification_error(&r, &res.estimate)?
            );
        }
        Command::Greedy => {
            cfg.algorithms = vec![Algorithm::Greedy];
            write_benchmark(out, &run_benchmark(&cfg)?)?;
        }
        Command::Baseline { kind } => {
            cfg.algorithms = vec![match kind {
                KindArg::Uniform => Algorithm::RandUniform,
                KindArg::Varied => Algorithm::RandVaried,
            }];
            write_benchmark(out, &run_benchmark(&cfg)?)?;
        }
        Command::Sweep => write_sweep(out, &run_single_env_sweep(&cfg)?)?,
        Command::Bench => {
            write_benchmark(out, &run_benchmark(&cfg)?)?;
            write_sweep(out, &run_single_env_sweep(&cfg)?)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
