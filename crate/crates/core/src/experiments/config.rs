use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::agent::TrainConfig;
use crate::conditions::{GeneratorConfig, PositionPrior};
use crate::env::EnvConfig;
use crate::memory::MemoryParams;

/// Full experiment configuration, read from TOML with sections `[env]`,
/// `[memory]`, `[train]` and `[study]`. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub memory: MemoryParams,
    pub train: TrainConfig,
    pub study: StudyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Bayes,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    /// Evaluation episodes per goal.
    pub episodes: usize,
    pub seed: u64,
    /// Target-half probabilities of the training layouts.
    pub prior: PositionPrior,
    pub ablation_seeds: usize,
    /// Training episodes for each ablation policy; `None` uses
    /// `train.total_episodes`.
    pub ablation_train_episodes: Option<usize>,
    pub gamma_values: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub sensitivity_levels: Vec<f64>,
    /// Evaluation episodes per goal in sensitivity, sweep and calibration
    /// runs.
    pub probe_episodes: usize,
    pub calibration_trials: usize,
    /// Trials evaluated before the surrogate takes over (the first one is
    /// always the default parameter set).
    pub calibration_init: usize,
    /// Random candidates scored by the acquisition function per trial.
    pub calibration_candidates: usize,
    /// Weights of the difficulty and hierarchy scores in the objective.
    pub calibration_weights: [f64; 2],
    pub calibration_mode: SearchMode,
    /// Upper end of the retrieval-threshold search range.
    pub theta_max: f64,
    pub generator: GeneratorConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            seed: 0,
            prior: PositionPrior::default(),
            ablation_seeds: 5,
            ablation_train_episodes: None,
            gamma_values: vec![0.99, 0.75, 0.50],
            theta_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            sigma_grid: vec![0.0, 0.02, 0.05, 0.08, 0.1],
            sensitivity_levels: vec![0.05, 0.10, 0.25],
            probe_episodes: 100,
            calibration_trials: 20,
            calibration_init: 5,
            calibration_candidates: 512,
            calibration_weights: [1.0, 1.0],
            calibration_mode: SearchMode::Bayes,
            theta_max: 3.0,
            generator: GeneratorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.memory
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let bad = |m: &str| Err(ExperimentError::Config(m.to_owned()));
        if self.env.n_max != self.study.generator.n_max {
            return bad("env.N_max and study.generator.N_max differ");
        }
        if self.env.t_max == 0 {
            return bad("env.T_max must be positive");
        }
        if self.study.episodes == 0 || self.study.probe_episodes == 0 {
            return bad("episode counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.train.gamma) {
            return bad("train.gamma must lie in [0, 1]");
        }
        if self.train.hidden.is_empty() || self.train.hidden.contains(&0) {
            return bad("train.hidden needs at least one non-empty layer");
        }
        for p in [self.study.prior.left, self.study.prior.top] {
            if !(0.0..=1.0).contains(&p) {
                return bad("study.prior probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("[memory]"));
        assert!(text.contains("K_glob = 4"));
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_file() {
        let cfg = ExperimentConfig::from_toml("[memory]\ntheta = 1.5\n[study]\nepisodes = 10\n").unwrap();
        assert_eq!(cfg.memory.theta, 1.5);
        assert_eq!(cfg.memory.b, 0.5);
        assert_eq!(cfg.study.episodes, 10);
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("[memory]\nsigma = 0.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\ngamma = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[env]\nN_max = 8\n").is_err());
        assert!(ExperimentConfig::from_toml("not toml at all [").is_err());
    }
}
