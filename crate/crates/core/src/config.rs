//! Experiment configuration: one TOML file drives the simulator, the
//! evolution engine, and the Q-learning trainer. Every field has a default,
//! so an empty file (or none at all) reproduces the reference setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ge::EvolutionConfig;
use crate::qlearn::QConfig;
use crate::sim::SimConfig;

/// A named invariant violation in some configuration section.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(String);

impl ConfigError {
    pub fn new(message: impl Into<String>) -> ConfigError {
        ConfigError(message.into())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

fn default_num_runs() -> u32 {
    10
}

fn default_test_episodes() -> u32 {
    10
}

fn default_output_dir() -> String {
    "out".to_string()
}

fn default_master_seed() -> u64 {
    42
}

fn default_policies() -> Vec<String> {
    [
        "best-dt", "S0", "S1", "S2", "S3", "S4", "S0-4-0", "S0-4-0FI", "S0-4-0GI", "ITA", "SWE",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Root configuration. `[sim]`, `[evolution]` and `[qlearning]` mirror the
/// corresponding module configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed at the top of the derivation hierarchy (master -> run ->
    /// generation -> slot -> episode).
    pub master_seed: u64,
    /// Independent evolution runs launched by the experiment driver.
    pub num_runs: u32,
    /// Greedy evaluation episodes per trained policy.
    pub test_episodes: u32,
    pub output_dir: String,
    /// Policies the comparison harness evaluates, by CLI name.
    pub policies: Vec<String>,
    pub sim: SimConfig,
    pub evolution: EvolutionConfig,
    pub qlearning: QConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: default_master_seed(),
            num_runs: default_num_runs(),
            test_episodes: default_test_episodes(),
            output_dir: default_output_dir(),
            policies: default_policies(),
            sim: SimConfig::default(),
            evolution: EvolutionConfig::default(),
            qlearning: QConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_runs < 1 {
            return Err(ConfigError::new("num_runs must be >= 1"));
        }
        if self.test_episodes < 1 {
            return Err(ConfigError::new("test_episodes must be >= 1"));
        }
        self.sim.validate()?;
        self.evolution.validate()?;
        self.qlearning.validate()
    }

    /// Parses a TOML file, filling omitted fields with defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigLoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigLoadError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|source| ConfigLoadError::Parse {
                path: origin.to_string(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical TOML rendering with every field spelled out.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
