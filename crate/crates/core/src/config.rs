use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::GeneratorConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::training::TrainerConfig;

/// Environment variable that overrides every output directory.
pub const OUT_ENV: &str = "DIPLOMAT_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub episodes: usize,
    /// Scenario distribution; defaults to the curriculum's last stage.
    pub generator: Option<GeneratorConfig>,
    pub deterministic: bool,
    pub pareto_limit: u128,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        Self {
            episodes: e.episodes,
            generator: None,
            deterministic: e.deterministic,
            pareto_limit: e.pareto_limit,
        }
    }
}

/// Everything one experiment needs, read from a single JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub train: TrainerConfig,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            train: TrainerConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.evaluation.episodes == 0 {
            return Err(Error::Config("evaluation.episodes must be positive".into()));
        }
        if let Some(g) = &self.evaluation.generator {
            g.validate()?;
        }
        Ok(())
    }

    pub fn eval_generator(&self) -> GeneratorConfig {
        self.evaluation.generator.clone().unwrap_or_else(|| {
            let c = &self.train.curriculum;
            c.stage(c.last).generator.clone()
        })
    }

    /// Evaluation settings sharing the training environment and objective.
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            episodes: self.evaluation.episodes,
            generator: self.eval_generator(),
            env: self.train.env.clone(),
            objective: self.train.objective,
            deterministic: self.evaluation.deterministic,
            pareto_limit: self.evaluation.pareto_limit,
        }
    }
}

/// `DIPLOMAT_OUT` if set, else the flag, else the config value.
pub fn resolve_out(flag: Option<&Path>, config: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.unwrap_or(config).to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 3, "train": {"ppo": {"lr": 0.001}}}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.ppo.lr, 0.001);
        assert_eq!(cfg.train.ppo.clip, 0.2);
    }

    #[test]
    fn unknown_fields_name_the_field_and_line() {
        let err = RunConfig::from_json("{\n  \"seed\": 1,\n  \"trian\": {}\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("trian") && msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = RunConfig::from_json(r#"{"train": {"ppo": {"clip": 1.5}}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
