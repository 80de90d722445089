use serde::{Deserialize, Serialize};

use crate::domain::GeneratorConfig;
use crate::error::{Error, Result};

pub const FINAL_STAGE: usize = 5;

/// Reservation shared by every agent in stages 1–4; the last stage draws them.
pub const FIXED_RESERVATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromotionRule {
    /// Iterations averaged.
    pub window: usize,
    /// Mean consensus rate needed to advance.
    pub threshold: f64,
}

impl Default for PromotionRule {
    fn default() -> Self {
        Self {
            window: 20,
            threshold: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumStage {
    /// 1-based.
    pub index: usize,
    pub generator: GeneratorConfig,
    /// Chance that a non-anchor seat is played by a rule-based exploiter.
    #[serde(default)]
    pub exploiter_prob: f64,
}

impl CurriculumStage {
    /// The built-in stage table entry.
    pub fn preset(index: usize) -> Result<Self> {
        let fixed = |n, m| GeneratorConfig {
            reservation: (FIXED_RESERVATION, FIXED_RESERVATION),
            ..GeneratorConfig::fixed(n, m, 5)
        };
        let generator = match index {
            1 => fixed(2, 1),
            2 => fixed(2, 3),
            3 => fixed(4, 1),
            4 => fixed(4, 3),
            5 => GeneratorConfig {
                agents: (2, 6),
                issues: (1, 4),
                values: (3, 6),
                reservation: (0.0, 0.3),
                randomize_budgets: true,
                ..GeneratorConfig::default()
            },
            _ => return Err(Error::Config(format!("no curriculum stage {index}"))),
        };
        Ok(Self {
            index,
            generator,
            exploiter_prob: if index == FINAL_STAGE { 0.25 } else { 0.0 },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Curriculum {
    pub stages: Vec<CurriculumStage>,
    pub rule: PromotionRule,
    /// Stage to start in (1-based).
    pub start: usize,
    /// Never advance past this stage.
    pub last: usize,
}

impl Default for Curriculum {
    fn default() -> Self {
        Self {
            stages: (1..=FINAL_STAGE)
                .map(|i| CurriculumStage::preset(i).expect("preset stage"))
                .collect(),
            rule: PromotionRule::default(),
            start: 1,
            last: FINAL_STAGE,
        }
    }
}

impl Curriculum {
    /// A curriculum that stays in one stage.
    pub fn single(stage: CurriculumStage) -> Self {
        let index = stage.index;
        let mut c = Self::default();
        c.stages[index - 1] = stage;
        c.start = index;
        c.last = index;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() != FINAL_STAGE {
            return Err(Error::Config(format!(
                "curriculum needs {FINAL_STAGE} stages, got {}",
                self.stages.len()
            )));
        }
        for (k, s) in self.stages.iter().enumerate() {
            if s.index != k + 1 {
                return Err(Error::Config(format!(
                    "curriculum stage at position {} has index {}",
                    k + 1,
                    s.index
                )));
            }
            if !(0.0..=1.0).contains(&s.exploiter_prob) {
                return Err(Error::Config(format!(
                    "stage {}: exploiter_prob {} outside [0, 1]",
                    s.index, s.exploiter_prob
                )));
            }
            s.generator.validate()?;
        }
        if !(1..=self.last).contains(&self.start) || self.last > FINAL_STAGE {
            return Err(Error::Config(format!(
                "curriculum start {} / last {} out of range",
                self.start, self.last
            )));
        }
        if self.rule.window == 0 {
            return Err(Error::Config("promotion window must be positive".into()));
        }
        Ok(())
    }

    pub fn stage(&self, index: usize) -> &CurriculumStage {
        &self.stages[index - 1]
    }
}

/// Next stage given per-iteration consensus rates observed in the current
/// stage. Needs a full window; never demotes.
pub fn curriculum_advance(history: &[f64], stage: usize, rule: &PromotionRule) -> usize {
    if stage >= FINAL_STAGE || rule.window == 0 || history.len() < rule.window {
        return stage;
    }
    let recent = &history[history.len() - rule.window..];
    let mean = recent.iter().sum::<f64>() / rule.window as f64;
    if mean >= rule.threshold {
        stage + 1
    } else {
        stage
    }
}
