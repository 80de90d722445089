use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::hcn::{HcnConfig, HcnParams};
use crate::numerics::AdamState;
use crate::rewards::ObjectiveWeights;

use super::curriculum::{curriculum_advance, Curriculum};
use super::pool::{OpponentPool, PoolConfig};
use super::ppo::{ppo_update, PpoConfig, UpdateStats};
use super::rollout::{collect_parallel, Rollout, RolloutOptions};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.ddck";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub hcn: HcnConfig,
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    pub objective: ObjectiveWeights,
    pub curriculum: Curriculum,
    pub pool: PoolConfig,
    /// Learner decisions to collect before stopping.
    pub total_steps: usize,
    /// Episodes run in lockstep per worker.
    pub lanes: usize,
    /// Iterations between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub workers: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            hcn: HcnConfig::default(),
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            objective: ObjectiveWeights::default(),
            curriculum: Curriculum::default(),
            pool: PoolConfig::default(),
            total_steps: 200_000,
            lanes: 16,
            checkpoint_every: 25,
            workers: 1,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.hcn.validate()?;
        self.ppo.validate()?;
        self.curriculum.validate()?;
        if self.hcn.buckets != self.env.reveal_buckets {
            return Err(Error::Config(format!(
                "network expects {} reveal buckets, environment uses {}",
                self.hcn.buckets, self.env.reveal_buckets
            )));
        }
        for s in &self.curriculum.stages[self.curriculum.start - 1..self.curriculum.last] {
            let g = &s.generator;
            if g.max_issues() > self.hcn.max_issues || g.max_values() > self.hcn.max_values {
                return Err(Error::Config(format!(
                    "stage {} draws up to {} issues × {} values; network holds {} × {}",
                    s.index,
                    g.max_issues(),
                    g.max_values(),
                    self.hcn.max_issues,
                    self.hcn.max_values
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.pool.p_hist) {
            return Err(Error::Config("pool.p_hist must lie in [0, 1]".into()));
        }
        if self.lanes == 0 || self.workers == 0 {
            return Err(Error::Config("lanes and workers must be positive".into()));
        }
        Ok(())
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions {
            env: self.env.clone(),
            lanes: self.lanes,
            p_hist: self.pool.p_hist,
            gamma: self.ppo.gamma,
            gae_lambda: self.ppo.gae_lambda,
            objective: self.objective,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub stage: usize,
    pub steps: usize,
    pub episodes: usize,
    pub consensus_rate: Option<f64>,
    pub mean_objective: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

pub struct Trainer {
    pub config: TrainerConfig,
    pub params: HcnParams,
    pub optimizer: AdamState,
    pub pool: OpponentPool,
    pub stage: usize,
    /// Consensus rates seen since entering the current stage.
    pub history: Vec<f64>,
    pub iteration: usize,
    pub steps: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: TrainerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = HcnParams::init(config.hcn.clone(), &mut rng)?;
        Ok(Self::with_params(config, params, rng))
    }

    /// Continue from given parameters (fresh optimiser and pool).
    pub fn from_params(config: TrainerConfig, params: HcnParams, seed: u64) -> Result<Self> {
        config.validate()?;
        if params.config != config.hcn {
            return Err(Error::Config("checkpoint network differs from the configured one".into()));
        }
        Ok(Self::with_params(config, params, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn with_params(config: TrainerConfig, params: HcnParams, rng: ChaCha8Rng) -> Self {
        Self {
            optimizer: AdamState::new(config.ppo.adam(), &params.tensors),
            pool: OpponentPool::new(config.pool),
            stage: config.curriculum.start,
            history: Vec::new(),
            iteration: 0,
            steps: 0,
            params,
            config,
            rng,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.steps >= self.config.total_steps
    }

    /// Collect, update, then apply the curriculum and pool rules.
    pub fn iterate(&mut self) -> Result<(IterationLog, Rollout, UpdateStats)> {
        let rollout_seed: u64 = self.rng.random();
        let update_seed: u64 = self.rng.random();
        let count = self
            .config
            .ppo
            .steps_per_iteration
            .min(self.config.total_steps.saturating_sub(self.steps))
            .max(1);
        let stage = self.config.curriculum.stage(self.stage).clone();
        let rollout = collect_parallel(
            &self.params,
            &self.pool,
            &stage,
            count,
            rollout_seed,
            &self.config.rollout_options(),
            self.config.workers,
        )?;
        let stats = ppo_update(
            &mut self.params,
            &mut self.optimizer,
            &rollout.buffer,
            &self.config.ppo,
            update_seed,
        )?;
        self.iteration += 1;
        self.steps += rollout.buffer.len();
        let log = IterationLog {
            iteration: self.iteration,
            stage: self.stage,
            steps: self.steps,
            episodes: rollout.episodes.len(),
            consensus_rate: rollout.consensus_rate(),
            mean_objective: rollout.mean_objective(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            mean_ratio: stats.mean_ratio,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
        };
        if let Some(rate) = log.consensus_rate {
            self.history.push(rate);
            let next = curriculum_advance(&self.history, self.stage, &self.config.curriculum.rule)
                .min(self.config.curriculum.last);
            if next != self.stage {
                self.stage = next;
                self.history.clear();
            }
        }
        self.pool.snapshot_to_pool(&self.params, self.iteration);
        Ok((log, rollout, stats))
    }

    /// Train to the step budget. With an output directory, writes the
    /// JSON-lines log, periodic checkpoints and `final.ddck`.
    pub fn run(&mut self, out: Option<&Path>) -> Result<Vec<IterationLog>> {
        let mut writer = match out {
            Some(dir) => {
                fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
                Some(BufWriter::new(File::create(dir.join(LOG_FILE))?))
            }
            None => None,
        };
        let mut logs = Vec::new();
        while !self.is_finished() {
            let (log, _, _) = self.iterate()?;
            if let Some(w) = writer.as_mut() {
                serde_json::to_writer(&mut *w, &log)?;
                w.write_all(b"\n")?;
            }
            if let Some(dir) = out {
                let every = self.config.checkpoint_every;
                if every > 0 && self.iteration.is_multiple_of(every) {
                    self.params.save(&checkpoint_path(dir, self.iteration))?;
                }
            }
            logs.push(log);
        }
        if let Some(mut w) = writer {
            w.flush()?;
        }
        if let Some(dir) = out {
            self.params.save(&dir.join(CHECKPOINT_DIR).join(FINAL_CHECKPOINT))?;
        }
        Ok(logs)
    }
}

pub fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("iter_{iteration:06}.ddck"))
}
