//! Run configuration, read from TOML.
//!
//! Every section has defaults, so an empty file is a valid configuration.
//! Keys not listed here are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actor::RemoteActorConfig;
use crate::arrangement::Vocabulary;
use crate::learning::{FeaturizerConfig, Link, Optimizer};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Caps on description length per domain: tabletop arrangement, and text
/// games whose steps arrive through `ingest`.
pub const MAX_LEN_ROBOT: usize = 5;
pub const MAX_LEN_TEXT_GAME: usize = 10;

/// Hyperparameters for value-dataset collection and value-model training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    /// Discount. Only 1 is accepted: prefix labels equal the terminal reward
    /// only without discounting.
    pub gamma: f64,
    pub max_len: usize,
    pub kl_coefficient: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Random trajectories sampled per expert step.
    pub trajectories_per_step: usize,
    pub upsample: bool,
    /// Output link of the value model.
    pub link: Link,
    pub optimizer: Optimizer,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            max_len: MAX_LEN_ROBOT,
            kl_coefficient: 1.0,
            learning_rate: 0.3,
            batch_size: 32,
            epochs: 30,
            trajectories_per_step: 128,
            upsample: true,
            link: Link::Logistic,
            optimizer: Optimizer::Adagrad,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.gamma != 1.0 {
            return bad(format!("gamma must be 1 for Monte Carlo labels of a sparse terminal reward, got {}", self.gamma));
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        if !(self.kl_coefficient >= 0.0 && self.kl_coefficient.is_finite()) {
            return bad(format!("kl_coefficient must be non-negative, got {}", self.kl_coefficient));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.trajectories_per_step == 0 {
            return bad("batch_size and trajectories_per_step must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActorConfig {
    Scripted {
        #[serde(default = "default_boost")]
        boost: f64,
        #[serde(default = "default_penalty")]
        penalty: f64,
    },
    Remote(RemoteActorConfig),
}

fn default_boost() -> f64 {
    3.0
}

fn default_penalty() -> f64 {
    0.5
}

impl Default for ActorConfig {
    fn default() -> Self {
        ActorConfig::Scripted { boost: default_boost(), penalty: default_penalty() }
    }
}

/// Scene generation for demonstrations and evaluation suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub min_targets: usize,
    pub max_targets: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub budget: usize,
    pub vocabulary: Vocabulary,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            min_targets: 2,
            max_targets: 3,
            min_objects: 7,
            max_objects: 9,
            budget: crate::arrangement::DEFAULT_BUDGET,
            vocabulary: Vocabulary::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = 2 <= self.min_targets
            && self.min_targets <= self.max_targets
            && self.max_targets <= 4
            && self.max_targets <= self.min_objects
            && self.min_objects <= self.max_objects
            && self.max_objects <= 9
            && self.budget >= 1;
        if !ok {
            return Err(ConfigError::Invalid(format!(
                "scene ranges must satisfy 2 <= targets <= 4, targets <= objects <= 9, budget >= 1: {self:?}"
            )));
        }
        self.vocabulary.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub episodes: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { episodes: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Variant names: `learned`, `full`, `manual`, `random:<k>`, `zeroshot`.
    pub variants: Vec<String>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub min_targets: usize,
    pub max_targets: usize,
    pub workers: usize,
    /// Take the actor's most likely action instead of sampling.
    pub greedy: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            variants: vec!["learned".into(), "full".into()],
            episodes: 50,
            seeds: vec![0, 1, 2, 3, 4],
            min_targets: 2,
            max_targets: 4,
            workers: 4,
            greedy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub learning: LearningConfig,
    pub featurizer: FeaturizerConfig,
    pub actor: ActorConfig,
    pub env: EnvConfig,
    pub demos: DemoConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            learning: LearningConfig::default(),
            featurizer: FeaturizerConfig::default(),
            actor: ActorConfig::default(),
            env: EnvConfig::default(),
            demos: DemoConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.learning.validate()?;
        self.env.validate()?;
        if let ActorConfig::Scripted { boost, penalty } = self.actor {
            crate::actor::ScriptedActorSpec::new(boost, penalty).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
