//! Kinematic simulation of a balancing spherical robot on a two-table arena.
//!
//! The robot accepts speed and heading-rate commands, tracks them with
//! first-order lags scaled by surface friction, is pushed around by terrain
//! slopes and human nudges, and stops against walls. The open edge is where
//! it falls off.

mod arena;
mod robot;

pub use arena::{ArenaSpec, Bump, Edge, Surface, Zone};
pub use robot::{check_fall, motor_to_command, sense, step, Command, RobotState};

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("position ({x:.4}, {y:.4}) is outside the arena")]
    OutsideArena { x: f64, y: f64 },
    #[error("cannot step a fallen robot")]
    Fallen,
    #[error("invalid arena: {0}")]
    InvalidArena(String),
    #[error("arena file: {0}")]
    ArenaFile(String),
    #[error("invalid sim config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotated a quarter turn counterclockwise.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Scaled down to `max` length if longer.
    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let n = self.norm();
        if n > max {
            self * (max / n)
        } else {
            self
        }
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = theta.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// A human hand held against the table as a temporary barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

pub const MAX_NUDGE: f64 = 1.0;
pub const MAX_HAND_WALL: f64 = 0.5;

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Shortened symmetrically about its midpoint to at most `max` meters.
    pub fn clamp_length(self, max: f64) -> Segment {
        let len = self.length();
        if len <= max {
            return self;
        }
        let mid = (self.a + self.b) * 0.5;
        let half = (self.b - self.a) * (0.5 * max / len);
        Segment { a: mid - half, b: mid + half }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionKind {
    /// Translational velocity impulse, m/s.
    Nudge { impulse: Vec2 },
    /// Barrier active until `expiry` (seconds of session time).
    HandWall { segment: Segment, expiry: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    #[serde(flatten)]
    pub kind: InteractionKind,
    pub timestamp: f64,
}

impl InteractionEvent {
    pub fn nudge(impulse: Vec2, timestamp: f64) -> Self {
        InteractionEvent {
            kind: InteractionKind::Nudge { impulse: impulse.clamp_norm(MAX_NUDGE) },
            timestamp,
        }
    }

    pub fn hand_wall(segment: Segment, expiry: f64, timestamp: f64) -> Self {
        InteractionEvent {
            kind: InteractionKind::HandWall { segment: segment.clamp_length(MAX_HAND_WALL), expiry },
            timestamp,
        }
    }

    /// Applies the magnitude limits to an event received from outside.
    pub fn sanitized(self) -> Self {
        match self.kind {
            InteractionKind::Nudge { impulse } => Self::nudge(impulse, self.timestamp),
            InteractionKind::HandWall { segment, expiry } => Self::hand_wall(segment, expiry, self.timestamp),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub tau_speed: f64,
    pub tau_heading: f64,
    /// Decay time of non-driven (slip) velocity from slopes and nudges.
    pub tau_slip: f64,
    pub max_speed: f64,
    pub max_heading_rate: f64,
    /// Effective gravity for rolling down slopes, m/s².
    pub slope_gravity: f64,
    /// Per-channel noise on the normalized sensor values.
    pub sensor_noise_sigma: [f64; 5],
    /// Tilt angle mapped to ±1, rad.
    pub tilt_scale: f64,
    /// Longitudinal acceleration mapped to ±1, m/s².
    pub accel_scale: f64,
    /// Centripetal acceleration mapped to ±1, m/s².
    pub centripetal_scale: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.05,
            tau_speed: 0.3,
            tau_heading: 0.15,
            tau_slip: 0.3,
            max_speed: 1.0,
            max_heading_rate: std::f64::consts::PI,
            slope_gravity: 5.0,
            sensor_noise_sigma: [0.02; 5],
            tilt_scale: 0.35,
            accel_scale: 2.0,
            centripetal_scale: 2.0,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt", self.dt),
            ("tau_speed", self.tau_speed),
            ("tau_heading", self.tau_heading),
            ("tau_slip", self.tau_slip),
            ("max_speed", self.max_speed),
            ("max_heading_rate", self.max_heading_rate),
            ("tilt_scale", self.tilt_scale),
            ("accel_scale", self.accel_scale),
            ("centripetal_scale", self.centripetal_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.slope_gravity < 0.0 || self.sensor_noise_sigma.iter().any(|s| *s < 0.0) {
            return Err(SimError::InvalidConfig("negative gravity or noise".into()));
        }
        Ok(())
    }

    pub fn noiseless(mut self) -> Self {
        self.sensor_noise_sigma = [0.0; 5];
        self
    }
}
