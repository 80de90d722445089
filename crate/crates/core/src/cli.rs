use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::Baseline;
use crate::config::{resolve_out, RunConfig};
use crate::domain::{enumerate_deals, welfare_optimal_greedy, Scenario};
use crate::error::{Error, Result};
use crate::evaluation::{
    ablate, evaluate, pareto_front, play_episode, write_episodes_csv, AblationFlag, SeatPolicy,
};
use crate::hcn::HcnParams;
use crate::training::Trainer;

pub const EPISODES_FILE: &str = "episodes.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const ABLATION_FILE: &str = "ablation.json";

#[derive(Debug, Parser)]
#[command(name = "diplomat", version, about = "Multi-agent negotiation arena")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the training curriculum with periodic checkpoints and a JSON-lines log.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline on held-out episodes.
    Evaluate(EvaluateArgs),
    /// Play one episode and print its transcript.
    Simulate(SimulateArgs),
    /// Enumerate a scenario: deal count, welfare-optimal deal, Pareto front.
    Oracle(OracleArgs),
    /// Train and evaluate the full system and one variant per ablation flag.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run config file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (DIPLOMAT_OUT takes precedence).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 is the reproducible mode.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Network checkpoint (.ddck). Alone: self-play.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Baseline name (random, alternating-offers, conceder-BETA). Alone: all
    /// seats; with a checkpoint: odd seats.
    #[arg(long)]
    pub baseline: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Comma-separated seat policies, cycled over seats: baseline names or `hcn`.
    #[arg(long)]
    pub agents: String,
    /// Checkpoint for `hcn` seats.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample network actions instead of taking the most likely one.
    #[arg(long)]
    pub stochastic: bool,
    /// Open every message tag in every phase.
    #[arg(long)]
    pub phase_free: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Pareto-optimal deals to list.
    #[arg(long, default_value_t = 20)]
    pub show: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated: no-hierarchy, no-attention, no-shaping, no-pnp.
    #[arg(long)]
    pub flags: String,
    /// Seeds per variant, counting up from the base seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
    mean_episode_seconds: f64,
}

fn load_run(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut run = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        run.seed = seed;
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        run.train.workers = w;
    }
    let out = resolve_out(common.out.as_deref(), &run.out);
    Ok((run, out))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn parse_baseline(name: &str) -> Result<Baseline> {
    Baseline::parse(name).ok_or_else(|| Error::Config(format!("unknown baseline `{name}`")))
}

fn train(args: &TrainArgs) -> Result<()> {
    let (run, out) = load_run(&args.common)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.json"), run.to_json()?)?;
    let mut trainer = Trainer::new(run.train.clone(), run.seed)?;
    let logs = trainer.run(Some(&out))?;
    if let Some(last) = logs.last() {
        println!(
            "trained {} iterations, {} steps, final stage {}; output in {}",
            last.iteration,
            last.steps,
            trainer.stage,
            out.display()
        );
    }
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let (run, out) = load_run(&args.common)?;
    let network = args
        .checkpoint
        .as_deref()
        .map(|p| HcnParams::load(p).map(|params| SeatPolicy::Hcn(Arc::new(params))))
        .transpose()?;
    let baseline = args.baseline.as_deref().map(parse_baseline).transpose()?;
    let lineup: Vec<SeatPolicy> = match (network, baseline) {
        (Some(n), Some(b)) => vec![n, SeatPolicy::Baseline(b)],
        (Some(n), None) => vec![n],
        (None, Some(b)) => vec![SeatPolicy::Baseline(b)],
        (None, None) => {
            return Err(Error::Config("evaluate needs --checkpoint, --baseline or both".into()));
        }
    };
    let label = lineup.iter().map(SeatPolicy::name).collect::<Vec<_>>().join("+");
    let cfg = run.eval_config();
    let started = Instant::now();
    let report = evaluate(&label, &lineup, &cfg, run.seed, run.train.workers)?;
    let wall = started.elapsed().as_secs_f64();
    fs::create_dir_all(&out)?;
    write_episodes_csv(BufWriter::new(File::create(out.join(EPISODES_FILE))?), &report.records)?;
    write_json(&out.join(SUMMARY_FILE), &report.summary)?;
    write_json(
        &out.join(TIMING_FILE),
        &Timing {
            wall_seconds: wall,
            mean_episode_seconds: wall / cfg.episodes as f64,
        },
    )?;
    let s = &report.summary;
    println!(
        "{label}: {} episodes, consensus {:.3}, welfare {:.3}, gini {:.3}, rounds {:.2}, J {:.3}",
        s.episodes, s.consensus_rate, s.social_welfare, s.gini, s.mean_rounds, s.mean_objective
    );
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let network = args
        .checkpoint
        .as_deref()
        .map(|p| HcnParams::load(p).map(Arc::new))
        .transpose()?;
    let lineup = args
        .agents
        .split(',')
        .map(str::trim)
        .map(|name| match name {
            "hcn" => network
                .clone()
                .map(SeatPolicy::Hcn)
                .ok_or_else(|| Error::Config("`hcn` seats need --checkpoint".into())),
            other => parse_baseline(other).map(SeatPolicy::Baseline),
        })
        .collect::<Result<Vec<_>>>()?;
    let env_config = crate::env::EnvConfig {
        phase_free: args.phase_free,
        ..Default::default()
    };
    let env = play_episode(scenario, &lineup, &env_config, !args.stochastic, args.seed)?;
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    env.result()?.write_transcript(&mut lock)?;
    lock.flush()?;
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_json(&text)
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let count = scenario.deal_count();
    println!("{count} deals");
    // enumerate first so an oversized space is refused before anything else
    enumerate_deals(&scenario).map_err(|e| Error::OracleRefused(e.to_string()))?;
    let best = welfare_optimal_greedy(&scenario);
    let utilities = (0..scenario.num_agents)
        .map(|i| scenario.utility(i, &best))
        .collect::<Result<Vec<_>>>()?;
    println!(
        "welfare-optimal deal {:?} (total utility {:.6})",
        best.values,
        utilities.iter().sum::<f64>()
    );
    let front = pareto_front(&scenario)?;
    println!("pareto front: {} deals", front.len());
    for (deal, u) in front.deals.iter().zip(&front.utilities).take(args.show) {
        println!("  {:?} {:?}", deal.values, u);
    }
    if front.len() > args.show {
        println!("  ... {} more", front.len() - args.show);
    }
    Ok(())
}

fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let flags = AblationFlag::parse_list(&args.flags)?;
    let (run, out) = load_run(&args.common)?;
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|k| run.seed + k).collect();
    fs::create_dir_all(&out)?;
    let reports = ablate(&run, &flags, &seeds, Some(&out))?;
    write_json(&out.join(ABLATION_FILE), &reports)?;
    for r in &reports {
        let s = &r.summary;
        println!(
            "{:<14} consensus {:.3} welfare {:.3} gini {:.3} rounds {:.2}",
            r.label, s.consensus_rate, s.social_welfare, s.gini, s.mean_rounds
        );
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Oracle(a) => oracle(a),
        Command::Ablate(a) => ablate_cmd(a),
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
