use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Scenario;
use crate::env::MESSAGE_FEATURES;
use crate::error::{Error, Result};
use crate::numerics::{read_checkpoint, write_checkpoint, Tensor};
use crate::protocol::TAG_COUNT;

pub const MANIFEST_FORMAT: &str = "diplomat-hcn/1";

/// How Propose/Counteroffer deals are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalMode {
    /// The environment searches for a deal at the concession-implied target.
    #[default]
    TargetUtility,
    /// Deal indices are sampled from the per-issue value heads.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HcnConfig {
    pub d: usize,
    pub heads: usize,
    pub d_m: usize,
    pub history_len: usize,
    pub max_issues: usize,
    pub max_values: usize,
    pub buckets: usize,
    /// Coalition gate and stance head active; off freezes them to uniform / neutral.
    pub hierarchy: bool,
    /// Attention over opponents; off replaces it with a mean of value projections.
    pub attention: bool,
    pub proposal_mode: ProposalMode,
}

impl Default for HcnConfig {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            d_m: 32,
            history_len: 4,
            max_issues: 4,
            max_values: 8,
            buckets: 3,
            hierarchy: true,
            attention: true,
            proposal_mode: ProposalMode::TargetUtility,
        }
    }
}

impl HcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hcn: d = {} must be a positive multiple of heads = {}",
                self.d, self.heads
            )));
        }
        if self.d_m == 0 || self.history_len == 0 || self.max_issues == 0 || self.max_values < 2 {
            return Err(Error::Config("hcn: sizes must be positive".into()));
        }
        if self.buckets < 2 {
            return Err(Error::Config("hcn: at least two reveal buckets".into()));
        }
        Ok(())
    }

    /// Per-entity public feature width.
    pub fn env_width(&self) -> usize {
        5 + 1 + self.max_issues + self.max_issues * self.max_values + TAG_COUNT + 3 + 2 + 1 + 1
    }

    /// Per-entity private context width.
    pub fn context_width(&self) -> usize {
        self.max_issues + 3 + self.buckets * self.max_issues
    }

    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        let m = scenario.num_issues();
        let v = scenario.value_counts().into_iter().max().unwrap_or(0);
        if m > self.max_issues || v > self.max_values {
            return Err(Error::Config(format!(
                "network sized for {} issues × {} values cannot play {m} issues × {v} values",
                self.max_issues, self.max_values
            )));
        }
        Ok(())
    }
}

// Tensor slots, in checkpoint order.
pub(crate) const ENV1: usize = 0;
pub(crate) const ENV1_B: usize = 1;
pub(crate) const ENV2: usize = 2;
pub(crate) const ENV2_B: usize = 3;
pub(crate) const W_E: usize = 4;
pub(crate) const W_C: usize = 5;
pub(crate) const MSG: usize = 6;
pub(crate) const MSG_B: usize = 7;
pub(crate) const LSTM_IN: usize = 8;
pub(crate) const LSTM_HID: usize = 9;
pub(crate) const LSTM_B: usize = 10;
pub(crate) const W_Q: usize = 11;
pub(crate) const W_K: usize = 12;
pub(crate) const W_V: usize = 13;
pub(crate) const W_O: usize = 14;
pub(crate) const W_O_B: usize = 15;
pub(crate) const COALITION: usize = 16;
pub(crate) const STANCE: usize = 17;
pub(crate) const STANCE_B: usize = 18;
pub(crate) const STANCE_MOVE: usize = 19;
pub(crate) const MOVE: usize = 20;
pub(crate) const MOVE_B: usize = 21;
pub(crate) const ISSUE: usize = 22;
pub(crate) const ISSUE_B: usize = 23;
pub(crate) const CONCESSION: usize = 24;
pub(crate) const CONCESSION_B: usize = 25;
pub(crate) const VALUE: usize = 26;
pub(crate) const VALUE_B: usize = 27;
pub(crate) const SLOT_COUNT: usize = 28;

pub const SLOT_NAMES: [&str; SLOT_COUNT] = [
    "env1", "env1_b", "env2", "env2_b", "w_e", "w_c", "msg", "msg_b", "lstm_in", "lstm_hid",
    "lstm_b", "w_q", "w_k", "w_v", "w_o", "w_o_b", "coalition", "stance", "stance_b",
    "stance_move", "move", "move_b", "issue", "issue_b", "concession", "concession_b", "value",
    "value_b",
];

fn slot_shapes(c: &HcnConfig) -> Vec<Vec<usize>> {
    let (d, dm) = (c.d, c.d_m);
    let iv = c.max_issues * c.max_values;
    vec![
        vec![c.env_width(), d],
        vec![d],
        vec![d, d],
        vec![d],
        vec![d, d],
        vec![c.context_width(), d],
        vec![MESSAGE_FEATURES, dm],
        vec![dm],
        vec![dm, 4 * d],
        vec![d, 4 * d],
        vec![4 * d],
        vec![d, d],
        vec![d, d],
        vec![d, d],
        vec![d, d],
        vec![d],
        vec![d, 1],
        vec![2 * d, 3],
        vec![3],
        vec![3, TAG_COUNT],
        vec![2 * d, TAG_COUNT],
        vec![TAG_COUNT],
        vec![2 * d, iv],
        vec![iv],
        vec![2 * d, 2],
        vec![2],
        vec![2 * d, 1],
        vec![1],
    ]
}

/// All learnable tensors of the network plus the sizes they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct HcnParams {
    pub config: HcnConfig,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: HcnConfig,
    tensors: Vec<String>,
}

impl HcnParams {
    pub fn zeros(config: HcnConfig) -> Result<Self> {
        config.validate()?;
        let tensors = slot_shapes(&config).iter().map(|s| Tensor::zeros(s)).collect();
        Ok(Self { config, tensors })
    }

    /// Scaled Gaussian weights, zero biases, small output heads so the
    /// initial policy is close to uniform.
    pub fn init<R: Rng + ?Sized>(config: HcnConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let d = p.config.d;
        for (slot, t) in p.tensors.iter_mut().enumerate() {
            if t.dims().len() < 2 {
                continue;
            }
            let fan_in = t.dims()[0] as f64;
            let gain = match slot {
                MOVE | ISSUE | CONCESSION | STANCE | STANCE_MOVE | COALITION => 0.01,
                VALUE => 0.1,
                _ => 1.0,
            };
            *t = Tensor::randn(t.dims(), gain / fan_in.sqrt(), rng);
        }
        // forget-gate bias 1
        p.tensors[LSTM_B].data_mut()[d..2 * d].iter_mut().for_each(|x| *x = 1.0);
        Ok(p)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn manifest_path(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("json")
    }

    /// Write the checkpoint and its manifest next to it.
    pub fn save(&self, checkpoint: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(checkpoint)?);
        write_checkpoint(&mut out, &self.tensors)?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            config: self.config.clone(),
            tensors: SLOT_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        std::fs::write(
            Self::manifest_path(checkpoint),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(Self::manifest_path(checkpoint))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Checkpoint(format!(
                "manifest format {:?}, expected {MANIFEST_FORMAT:?}",
                manifest.format
            )));
        }
        let tensors = read_checkpoint(&mut BufReader::new(File::open(checkpoint)?))?;
        let expected = slot_shapes(&manifest.config);
        if tensors.len() != expected.len()
            || tensors.iter().zip(&expected).any(|(t, s)| t.dims() != s.as_slice())
        {
            return Err(Error::Checkpoint(
                "tensor shapes do not match the manifest".into(),
            ));
        }
        Ok(Self {
            config: manifest.config,
            tensors,
        })
    }
}
