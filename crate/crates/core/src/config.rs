//! Experiment configuration file and content hashing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::experiment::InteractorConfig;
use crate::pi::LearningConfig;
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Result of running the pit calibration on the shipped start snapshot.
pub const DEFAULT_ADA_RATE: f64 = 0.025;

/// The shipped start snapshot is snapshot `DEFAULT_SNAPSHOT_INDEX` of the
/// pre-adaptation run with this seed.
pub const DEFAULT_PREADAPT_SEED: u64 = 8;
pub const DEFAULT_SNAPSHOT_INDEX: usize = 0;

/// Learning schedule of the pre-adaptation trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreadaptConfig {
    pub eps_controller: f64,
    pub trial_duration_s: f64,
    /// Controller weights start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Forward-model weights start uniform in `[-model_init_scale, model_init_scale]`.
    pub model_init_scale: f64,
    pub trials: usize,
}

impl Default for PreadaptConfig {
    fn default() -> Self {
        PreadaptConfig {
            eps_controller: 1.0,
            trial_duration_s: 300.0,
            init_scale: 0.1,
            model_init_scale: 0.0,
            trials: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// First controller rate of the doubling grid.
    pub grid_start: f64,
    pub grid_steps: usize,
    pub escape_limit_s: f64,
    pub required_success: f64,
    /// Seconds a robot must stay outside the pit for an exit to count.
    pub stay_out_s: f64,
    /// Start positions are drawn within this fraction of the pit radius.
    pub start_radius_fraction: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            grid_start: 0.0125,
            grid_steps: 10,
            escape_limit_s: 20.0,
            required_success: 0.9,
            stay_out_s: 5.0,
            start_radius_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Base learning parameters; `eps_controller` is the ADA rate.
    pub learning: LearningConfig,
    pub sim: SimConfig,
    pub interactor: InteractorConfig,
    pub preadapt: PreadaptConfig,
    pub calibration: CalibrationConfig,
    pub session_duration_s: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            learning: LearningConfig::default().with_rate(DEFAULT_ADA_RATE),
            sim: SimConfig::default(),
            interactor: InteractorConfig::default(),
            preadapt: PreadaptConfig::default(),
            calibration: CalibrationConfig::default(),
            session_duration_s: 600.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.learning.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.session_duration_s > 0.0) || !(self.preadapt.trial_duration_s > 0.0) {
            return Err(ConfigError::Invalid("durations must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
