use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineAgent};
use crate::domain::{random_scenario, GeneratorConfig, Scenario};
use crate::env::{AgentAction, EnvConfig, NegotiationEnv};
use crate::error::{Error, Result};
use crate::hcn::{act, HcnParams};
use crate::rewards::{system_objective, ObjectiveWeights};

use super::metrics::{summarize, EpisodeRecord, MetricsSummary};
use super::pareto::is_pareto_optimal;

/// Who plays a seat.
#[derive(Debug, Clone)]
pub enum SeatPolicy {
    Hcn(Arc<HcnParams>),
    Baseline(Baseline),
}

impl SeatPolicy {
    pub fn name(&self) -> String {
        match self {
            SeatPolicy::Hcn(_) => "hcn".into(),
            SeatPolicy::Baseline(b) => b.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub generator: GeneratorConfig,
    pub env: EnvConfig,
    pub objective: ObjectiveWeights,
    /// Take the most likely action instead of sampling.
    pub deterministic: bool,
    /// Skip the Pareto check above this many deals.
    pub pareto_limit: u128,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            generator: GeneratorConfig::default(),
            env: EnvConfig::default(),
            objective: ObjectiveWeights::default(),
            deterministic: true,
            pareto_limit: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<EpisodeRecord>,
    pub summary: MetricsSummary,
}

/// Seed of held-out episode `index` under evaluation seed `seed`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.random()
}

/// Play one episode to termination; seat `i` uses `lineup[i % lineup.len()]`.
pub fn play_episode(
    scenario: Scenario,
    lineup: &[SeatPolicy],
    env_config: &EnvConfig,
    deterministic: bool,
    seed: u64,
) -> Result<NegotiationEnv> {
    if lineup.is_empty() {
        return Err(Error::Config("empty lineup".into()));
    }
    let n = scenario.num_agents;
    let (mut env, mut obs) = NegotiationEnv::reset(scenario, env_config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents: Vec<Option<BaselineAgent>> = (0..n)
        .map(|i| match &lineup[i % lineup.len()] {
            SeatPolicy::Baseline(b) => Some(BaselineAgent::new(*b)),
            SeatPolicy::Hcn(_) => None,
        })
        .collect();
    while !env.is_done() {
        let mut actions = vec![AgentAction::pass(); n];
        // group network seats by parameter set so each set runs one batch
        let mut done = vec![false; n];
        for i in 0..n {
            if done[i] {
                continue;
            }
            if let SeatPolicy::Hcn(p) = &lineup[i % lineup.len()] {
                let group: Vec<usize> = (i..n)
                    .filter(|&k| matches!(&lineup[k % lineup.len()], SeatPolicy::Hcn(q) if Arc::ptr_eq(p, q)))
                    .collect();
                let views: Vec<_> = group.iter().map(|&k| &obs[k]).collect();
                for (d, &k) in act(p, &views, deterministic, &mut rng)?.into_iter().zip(&group) {
                    actions[k] = d.action;
                    done[k] = true;
                }
            }
        }
        for (i, agent) in agents.iter_mut().enumerate() {
            if let Some(a) = agent {
                actions[i] = a.act(&env, i, &mut rng);
            }
        }
        obs = env.step(&actions)?.observations;
    }
    Ok(env)
}

pub fn episode_record(
    env: &NegotiationEnv,
    episode_id: usize,
    weights: &ObjectiveWeights,
    pareto_limit: u128,
) -> Result<EpisodeRecord> {
    let result = env.result()?;
    let scenario = env.scenario();
    let reservations: Vec<f64> = scenario.profiles.iter().map(|p| p.reservation).collect();
    let objective = system_objective(
        &result.outcome,
        &result.utilities,
        &reservations,
        env.state().total_budget(),
        weights,
    )?;
    let pareto = match result.outcome.deal() {
        Some(deal) if scenario.deal_count() <= pareto_limit => Some(is_pareto_optimal(scenario, deal)?),
        _ => None,
    };
    Ok(EpisodeRecord {
        episode_id,
        seed: env.seed(),
        num_agents: scenario.num_agents,
        num_issues: scenario.num_issues(),
        agreement: result.outcome.is_agreement(),
        rounds: result.rounds,
        utilities: result.utilities,
        objective,
        pareto,
    })
}

fn run_range(
    lineup: &[SeatPolicy],
    cfg: &EvalConfig,
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<Vec<EpisodeRecord>> {
    range
        .map(|k| {
            let s = episode_seed(seed, k);
            let scenario = random_scenario(&cfg.generator, s)?;
            let env = play_episode(scenario, lineup, &cfg.env, cfg.deterministic, s)?;
            episode_record(&env, k, &cfg.objective, cfg.pareto_limit)
        })
        .collect()
}

/// Run `cfg.episodes` held-out episodes. Each episode depends only on its
/// index and `seed`, so the result does not change with `workers`.
pub fn evaluate(
    label: &str,
    lineup: &[SeatPolicy],
    cfg: &EvalConfig,
    seed: u64,
    workers: usize,
) -> Result<EvalReport> {
    if cfg.episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    cfg.generator.validate()?;
    let workers = workers.clamp(1, cfg.episodes);
    let records = if workers == 1 {
        run_range(lineup, cfg, seed, 0..cfg.episodes)?
    } else {
        let chunk = cfg.episodes.div_ceil(workers);
        let parts: Vec<Result<Vec<EpisodeRecord>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let range = (w * chunk).min(cfg.episodes)..((w + 1) * chunk).min(cfg.episodes);
                    s.spawn(move || run_range(lineup, cfg, seed, range))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("evaluation worker panicked".into()))))
                .collect()
        });
        let mut all = Vec::with_capacity(cfg.episodes);
        for p in parts {
            all.extend(p?);
        }
        all
    };
    let summary = summarize(label, &records)?;
    Ok(EvalReport { records, summary })
}
