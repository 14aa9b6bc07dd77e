use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normalize_angle, ArenaSpec, Edge, InteractionEvent, InteractionKind, SimConfig, SimError, Vec2};
use crate::pi::{MotorVector, SensorVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    /// Radians in (−π, π], 0 = +x.
    pub heading: f64,
    /// Driven speed along the heading, m/s.
    pub speed: f64,
    pub heading_rate: f64,
    /// Non-driven velocity from slopes, nudges and wall reactions, m/s.
    pub slip: Vec2,
    /// Total velocity at the previous tick, for acceleration synthesis.
    pub prev_velocity: Vec2,
    pub fallen: bool,
}

impl RobotState {
    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        RobotState {
            position,
            heading: normalize_angle(heading),
            speed: 0.0,
            heading_rate: 0.0,
            slip: Vec2::ZERO,
            prev_velocity: Vec2::ZERO,
            fallen: false,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed + self.slip
    }

    /// Cancels the velocity component along `normal` if it points that way.
    fn stop_along(&mut self, normal: Vec2) {
        let into = self.velocity().dot(normal);
        if into > 0.0 {
            self.slip = self.slip - normal * into;
        }
    }
}

/// Target speed (m/s) and heading rate (rad/s) for the balancing controller.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub speed: f64,
    pub heading_rate: f64,
}

pub fn motor_to_command(y: &MotorVector, cfg: &SimConfig) -> Command {
    Command {
        speed: y.speed_cmd * cfg.max_speed,
        heading_rate: y.heading_rate_cmd * cfg.max_heading_rate,
    }
}

/// Intersection parameter of `p + t (q − p)` with segment `a b`, if any.
fn crossing(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (a - p).cross(s) / denom;
    let u = (a - p).cross(r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

const WALL_STANDOFF: f64 = 1e-6;

/// Advances the robot by one tick.
///
/// Nudges in `events` are applied once; hand walls act as barriers for this
/// tick. The caller filters expired walls and delivers each nudge only on
/// the tick it happens.
pub fn step(
    state: &RobotState,
    cmd: Command,
    arena: &ArenaSpec,
    events: &[InteractionEvent],
    cfg: &SimConfig,
) -> Result<RobotState, SimError> {
    if state.fallen {
        return Err(SimError::Fallen);
    }
    let dt = cfg.dt;
    let friction = arena.friction_at(state.position);
    let mut next = *state;
    next.prev_velocity = state.velocity();

    next.speed += (friction * cmd.speed - state.speed) * dt / cfg.tau_speed;
    next.speed = next.speed.clamp(-cfg.max_speed, cfg.max_speed);
    next.heading_rate += (friction * cmd.heading_rate - state.heading_rate) * dt / cfg.tau_heading;
    next.heading_rate = next.heading_rate.clamp(-cfg.max_heading_rate, cfg.max_heading_rate);

    let downhill = -arena.slope_or_flat(state.position);
    next.slip = state.slip * (1.0 - dt / cfg.tau_slip) + downhill * (cfg.slope_gravity * dt);
    for ev in events {
        if let InteractionKind::Nudge { impulse } = ev.kind {
            next.slip += impulse.clamp_norm(super::MAX_NUDGE);
        }
    }
    next.heading = normalize_angle(state.heading + next.heading_rate * dt);

    let start = state.position;
    let mut end = start + next.velocity() * dt;

    for ev in events {
        if let InteractionKind::HandWall { segment, .. } = ev.kind {
            let seg = segment.clamp_length(super::MAX_HAND_WALL);
            if let Some(t) = crossing(start, end, seg.a, seg.b) {
                let along = seg.b - seg.a;
                let mut normal = along.perp() * (1.0 / along.norm());
                if normal.dot(end - start) < 0.0 {
                    normal = -normal;
                }
                end = start + (end - start) * t - normal * WALL_STANDOFF;
                next.stop_along(normal);
            }
        }
    }

    for edge in Edge::ALL {
        if edge == arena.open_edge {
            continue;
        }
        let n = ArenaSpec::edge_normal(edge);
        let past = match edge {
            Edge::Bottom => -end.y,
            Edge::Top => end.y - arena.depth,
            Edge::Left => -end.x,
            Edge::Right => end.x - arena.width,
        };
        if past > 0.0 {
            end = end - n * past;
            next.stop_along(n);
        }
    }

    next.position = end;
    next.fallen = check_fall(&next, arena);
    Ok(next)
}

/// True once the robot's center is past the open edge.
pub fn check_fall(state: &RobotState, arena: &ArenaSpec) -> bool {
    arena.beyond_open_edge(state.position) > 0.0
}

/// Synthesizes the five proprioceptive channels.
///
/// Pitch and roll are the terrain tilt along and across the heading (pitch
/// positive uphill, roll positive when the left side is higher), the
/// accelerometer reads longitudinal acceleration and centripetal `v ω`, and
/// the gyro reads the heading rate.
pub fn sense<R: Rng + ?Sized>(state: &RobotState, arena: &ArenaSpec, cfg: &SimConfig, rng: &mut R) -> SensorVector {
    let forward = Vec2::from_angle(state.heading);
    let grad = arena.slope_or_flat(state.position);
    let pitch = grad.dot(forward).atan();
    let roll = grad.dot(forward.perp()).atan();
    let v = state.velocity();
    let accel = (v - state.prev_velocity) * (1.0 / cfg.dt);
    let raw = [
        pitch / cfg.tilt_scale,
        roll / cfg.tilt_scale,
        accel.dot(forward) / cfg.accel_scale,
        v.dot(forward) * state.heading_rate / cfg.centripetal_scale,
        state.heading_rate / cfg.max_heading_rate,
    ];
    let mut noisy = raw;
    for (value, sigma) in noisy.iter_mut().zip(cfg.sensor_noise_sigma) {
        if sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            *value += sigma * z;
        }
    }
    SensorVector::clamped(noisy)
}
