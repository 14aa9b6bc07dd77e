//! The REA/ADA protocol: pre-adaptation, start-snapshot choice, condition
//! runs, ADA rate calibration against the pit, group balancing and
//! behavioral metrics.

mod interactor;
pub mod log;
mod metrics;
mod protocol;
mod session;

pub use interactor::{Interactor, InteractorConfig, Passive, ReplayInteractor, ScriptedInteractor};
pub use log::{LogFooter, LogHeader, SessionEvent, SessionEventKind, SessionLog, TickRow};
pub use metrics::{behavior_metrics, pit_escape_time, BehaviorMetrics};
pub use protocol::{
    assign_groups, calibrate_ada_rate, escape_success_rate, pick_start, pit_start_state, preadapt, run_pit_trial,
    CalibrationReport, GroupAssignment, Order, PitTrial,
};
pub use session::{arena_hash, network_hash, replay, rng_stream, run_condition, RunOptions, Session, Stream};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pi::{LearningConfig, PiError};
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Pi(#[from] PiError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("condition spec: {0}")]
    InvalidSpec(String),
    #[error("session already finished")]
    SessionFinished,
    #[error("session is paused")]
    SessionPaused,
    #[error("log: {0}")]
    Log(String),
    #[error("replay diverged: {0}")]
    ReplayMismatch(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    /// Frozen pre-adapted networks.
    Rea,
    /// Continuously adapting networks.
    Ada,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Condition::Rea => "REA",
            Condition::Ada => "ADA",
        })
    }
}

impl std::str::FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rea" => Ok(Condition::Rea),
            "ada" => Ok(Condition::Ada),
            other => Err(format!("unknown condition '{other}' (expected rea or ada)")),
        }
    }
}

/// What happens when the robot rolls off the open edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallPolicy {
    /// Put it back at the arena center (headless runs).
    Respawn,
    /// End the session (live runs).
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpec {
    pub mode: Condition,
    pub duration_s: f64,
    pub start_snapshot: Vec<u8>,
    pub learning: LearningConfig,
}

impl ConditionSpec {
    /// Sets `adapting` to match the mode.
    pub fn new(mode: Condition, duration_s: f64, start_snapshot: Vec<u8>, base: LearningConfig) -> Self {
        let learning = LearningConfig {
            adapting: mode == Condition::Ada,
            ..base
        };
        ConditionSpec {
            mode,
            duration_s,
            start_snapshot,
            learning,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.learning.adapting != (self.mode == Condition::Ada) {
            return Err(ExperimentError::InvalidSpec(format!(
                "{} requires adapting = {}",
                self.mode,
                self.mode == Condition::Ada
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ExperimentError::InvalidSpec("duration must be positive".into()));
        }
        self.learning.validate()?;
        Ok(())
    }
}
