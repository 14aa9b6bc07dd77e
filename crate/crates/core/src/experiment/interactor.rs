//! Sources of interaction events for a running session.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{ArenaSpec, InteractionEvent, RobotState, Segment, Vec2};

/// Supplies the events to apply on each tick.
pub trait Interactor {
    fn events(&mut self, tick: u64, t: f64, state: &RobotState, arena: &ArenaSpec) -> Vec<InteractionEvent>;
}

/// No interaction at all.
pub struct Passive;

impl Interactor for Passive {
    fn events(&mut self, _: u64, _: f64, _: &RobotState, _: &ArenaSpec) -> Vec<InteractionEvent> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractorConfig {
    /// Distance from the open edge at which the hand goes down, m.
    pub guard_distance: f64,
    /// Length of the hand barrier, m.
    pub wall_length: f64,
    /// How long each hand placement lasts, s.
    pub wall_hold: f64,
    /// Mean nudges per second (Poisson).
    pub nudge_rate: f64,
    /// Nudge impulse magnitude range, m/s.
    pub nudge_min: f64,
    pub nudge_max: f64,
}

impl Default for InteractorConfig {
    fn default() -> Self {
        InteractorConfig {
            guard_distance: 0.15,
            wall_length: 0.5,
            wall_hold: 1.0,
            nudge_rate: 1.0 / 30.0,
            nudge_min: 0.2,
            nudge_max: 0.6,
        }
    }
}

/// Simulated participant: guards the open edge with a hand and nudges the
/// robot now and then.
pub struct ScriptedInteractor {
    cfg: InteractorConfig,
    rng: ChaCha8Rng,
    wall_until: f64,
    wall_center: f64,
    next_nudge: f64,
}

impl ScriptedInteractor {
    pub fn new(cfg: InteractorConfig, mut rng: ChaCha8Rng) -> Self {
        let next_nudge = Self::draw_gap(&cfg, &mut rng);
        ScriptedInteractor {
            cfg,
            rng,
            wall_until: f64::NEG_INFINITY,
            wall_center: 0.0,
            next_nudge,
        }
    }

    fn draw_gap(cfg: &InteractorConfig, rng: &mut ChaCha8Rng) -> f64 {
        if cfg.nudge_rate <= 0.0 {
            return f64::INFINITY;
        }
        let u: f64 = rng.random::<f64>();
        -(1.0 - u).ln() / cfg.nudge_rate
    }
}

impl Interactor for ScriptedInteractor {
    fn events(&mut self, _tick: u64, t: f64, state: &RobotState, arena: &ArenaSpec) -> Vec<InteractionEvent> {
        let mut out = Vec::new();
        let mut push = Vec2::ZERO;
        while t >= self.next_nudge {
            let angle = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let magnitude = self.rng.random_range(self.cfg.nudge_min..=self.cfg.nudge_max);
            let impulse = Vec2::from_angle(angle) * magnitude;
            push += impulse;
            out.push(InteractionEvent::nudge(impulse, t));
            self.next_nudge += Self::draw_gap(&self.cfg, &mut self.rng);
        }

        let outward = ArenaSpec::edge_normal(arena.open_edge);
        let approaching = (state.velocity() + push).dot(outward) > 0.0
            || Vec2::from_angle(state.heading).dot(outward) > 0.0;
        let distance = arena.distance_to_open_edge(state.position);
        // a robot hugging the edge gets the hand whatever its direction
        let hugging = distance < self.cfg.guard_distance / 3.0;
        if distance >= self.cfg.guard_distance || !(approaching || hugging) {
            return out;
        }
        let (a, b) = arena.open_edge_segment();
        let along = (b - a) * (1.0 / (b - a).norm());
        let s = (state.position - a).dot(along);
        let half = self.cfg.wall_length / 2.0;
        // keep the hand where it is while it still covers the robot comfortably
        let covered = t < self.wall_until && (s - self.wall_center).abs() < half - self.cfg.guard_distance / 2.0;
        if !covered {
            self.wall_center = s;
            self.wall_until = t + self.cfg.wall_hold;
            let segment = Segment { a: a + along * (s - half), b: a + along * (s + half) };
            out.push(InteractionEvent::hand_wall(segment, self.wall_until, t));
        }
        out
    }
}

/// Re-issues previously logged events on their original ticks.
pub struct ReplayInteractor {
    by_tick: BTreeMap<u64, Vec<InteractionEvent>>,
}

impl ReplayInteractor {
    pub fn new(events: impl IntoIterator<Item = (u64, InteractionEvent)>) -> Self {
        let mut by_tick: BTreeMap<u64, Vec<InteractionEvent>> = BTreeMap::new();
        for (tick, ev) in events {
            by_tick.entry(tick).or_default().push(ev);
        }
        ReplayInteractor { by_tick }
    }
}

impl Interactor for ReplayInteractor {
    fn events(&mut self, tick: u64, _: f64, _: &RobotState, _: &ArenaSpec) -> Vec<InteractionEvent> {
        self.by_tick.remove(&tick).unwrap_or_default()
    }
}
