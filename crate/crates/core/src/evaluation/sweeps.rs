use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::training::{Curriculum, CurriculumStage, IterationLog, Trainer, TrainerConfig};

use super::harness::{evaluate, EvalConfig, EvalReport, SeatPolicy};
use super::metrics::{summarize, EpisodeRecord, MetricsSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationFlag {
    /// Coalition gate frozen uniform, stance frozen neutral.
    NoHierarchy,
    /// Attention replaced by a mean over projected opponents.
    NoAttention,
    /// Only the outcome reward term during training.
    NoShaping,
    /// Every tag legal in every phase, in training and evaluation.
    NoPnp,
}

impl AblationFlag {
    pub const ALL: [AblationFlag; 4] = [
        AblationFlag::NoHierarchy,
        AblationFlag::NoAttention,
        AblationFlag::NoShaping,
        AblationFlag::NoPnp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationFlag::NoHierarchy => "no-hierarchy",
            AblationFlag::NoAttention => "no-attention",
            AblationFlag::NoShaping => "no-shaping",
            AblationFlag::NoPnp => "no-pnp",
        }
    }

    /// Comma-separated list; unknown names are an error.
    pub fn parse_list(text: &str) -> Result<Vec<AblationFlag>> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn apply(self, cfg: &mut TrainerConfig) {
        match self {
            AblationFlag::NoHierarchy => cfg.hcn.hierarchy = false,
            AblationFlag::NoAttention => cfg.hcn.attention = false,
            AblationFlag::NoShaping => cfg.env.rewards = cfg.env.rewards.outcome_only(),
            AblationFlag::NoPnp => cfg.env.phase_free = true,
        }
    }
}

impl FromStr for AblationFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFlag(s.to_string()))
    }
}

impl fmt::Display for AblationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Train from `seed`, then evaluate self-play of the result.
pub fn train_and_evaluate(
    label: &str,
    train: &TrainerConfig,
    eval: &EvalConfig,
    seed: u64,
    workers: usize,
    out: Option<&Path>,
) -> Result<(EvalReport, Vec<IterationLog>)> {
    let mut trainer = Trainer::new(train.clone(), seed)?;
    let logs = trainer.run(out)?;
    let lineup = [SeatPolicy::Hcn(Arc::new(trainer.params))];
    let report = evaluate(label, &lineup, eval, seed.wrapping_add(EVAL_SEED_OFFSET), workers)?;
    Ok((report, logs))
}

/// Held-out evaluation episodes use the training seed shifted by this much.
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub label: String,
    pub flags: Vec<AblationFlag>,
    /// Pooled over every seed.
    pub summary: MetricsSummary,
    /// One consensus rate per seed, in seed order.
    pub seed_consensus: Vec<f64>,
}

/// The full system plus one variant per flag, each trained and evaluated
/// with identical budgets on every seed.
pub fn ablate(run: &RunConfig, flags: &[AblationFlag], seeds: &[u64], out: Option<&Path>) -> Result<Vec<VariantReport>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut variants = vec![("full".to_string(), Vec::new())];
    for &f in flags {
        variants.push((f.name().to_string(), vec![f]));
    }
    let mut reports = Vec::new();
    for (label, vflags) in variants {
        let mut train = run.train.clone();
        let mut eval = run.eval_config();
        for f in &vflags {
            f.apply(&mut train);
        }
        // the protocol change is a property of the environment, not of training
        eval.env.phase_free = train.env.phase_free;
        let mut records: Vec<EpisodeRecord> = Vec::new();
        let mut seed_consensus = Vec::new();
        for &seed in seeds {
            let dir = out.map(|d| d.join(&label).join(format!("seed_{seed}")));
            let (report, _) = train_and_evaluate(&label, &train, &eval, seed, train.workers, dir.as_deref())?;
            seed_consensus.push(report.summary.consensus_rate);
            let offset = records.len();
            records.extend(report.records.into_iter().map(|mut r| {
                r.episode_id += offset;
                r
            }));
        }
        reports.push(VariantReport {
            summary: summarize(&label, &records)?,
            label,
            flags: vflags,
            seed_consensus,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub agents: usize,
    pub stage: usize,
    pub summary: MetricsSummary,
    /// Training log of the run.
    pub log: Vec<IterationLog>,
}

/// Single-issue stage for `n` agents: stage 1 for two, stage 3 scaled otherwise.
pub fn scaled_stage(n: usize) -> Result<CurriculumStage> {
    let mut stage = CurriculumStage::preset(if n <= 2 { 1 } else { 3 })?;
    stage.generator.agents = (n, n);
    stage.generator.validate()?;
    Ok(stage)
}

/// Train and evaluate once per agent count.
pub fn scalability_sweep(run: &RunConfig, agents: &[usize], seed: u64, out: Option<&Path>) -> Result<Vec<ScalePoint>> {
    agents
        .iter()
        .map(|&n| {
            let stage = scaled_stage(n)?;
            let mut train = run.train.clone();
            train.curriculum = Curriculum::single(stage.clone());
            let mut eval = run.eval_config();
            eval.generator = stage.generator.clone();
            let label = format!("n={n}");
            let dir = out.map(|d| d.join(format!("n_{n}")));
            let (report, log) = train_and_evaluate(&label, &train, &eval, seed, train.workers, dir.as_deref())?;
            Ok(ScalePoint {
                agents: n,
                stage: stage.index,
                summary: report.summary,
                log,
            })
        })
        .collect()
}
