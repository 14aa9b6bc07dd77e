use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::log::{LogFooter, LogHeader, SessionEvent, SessionEventKind, SessionLog, TickRow};
use super::{ConditionSpec, ExperimentError, FallPolicy, Interactor, ReplayInteractor};
use crate::config::sha256_hex;
use crate::pi::{self, NetworkPair, SensorVector};
use crate::sim::{self, ArenaSpec, InteractionEvent, InteractionKind, RobotState, SimConfig};

/// Independent random streams derived from one session seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    SensorNoise = 1,
    Respawn = 2,
    Interactor = 3,
    Start = 4,
    Perturbation = 5,
}

pub fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn arena_hash(arena: &ArenaSpec) -> String {
    sha256_hex(arena.to_toml().as_bytes())
}

pub fn network_hash(pair: &NetworkPair) -> String {
    sha256_hex(&pi::snapshot(pair))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config_hash: String,
    /// Defaults to the arena center at rest, heading drawn from the seed.
    pub initial_state: Option<RobotState>,
    pub fall_policy: FallPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            config_hash: String::new(),
            initial_state: None,
            fall_policy: FallPolicy::Respawn,
        }
    }
}

fn center_start(arena: &ArenaSpec, rng: &mut ChaCha8Rng) -> RobotState {
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    RobotState::at_rest(arena.center(), heading)
}

/// One condition run, advanced a tick at a time by its owner.
pub struct Session {
    arena: ArenaSpec,
    sim: SimConfig,
    learning: pi::LearningConfig,
    pair: NetworkPair,
    state: RobotState,
    sensors: SensorVector,
    tick: u64,
    total_ticks: u64,
    noise_rng: ChaCha8Rng,
    respawn_rng: ChaCha8Rng,
    walls: Vec<InteractionEvent>,
    paused: bool,
    finished: bool,
    log: SessionLog,
}

impl Session {
    pub fn new(
        spec: &ConditionSpec,
        arena: &ArenaSpec,
        sim: &SimConfig,
        seed: u64,
        opts: &RunOptions,
    ) -> Result<Self, ExperimentError> {
        spec.validate()?;
        sim.validate()?;
        let pair = pi::restore(&spec.start_snapshot)?;
        let initial = match opts.initial_state {
            Some(s) => s,
            None => center_start(arena, &mut rng_stream(seed, Stream::Start)),
        };
        let mut noise_rng = rng_stream(seed, Stream::SensorNoise);
        let sensors = sim::sense(&initial, arena, sim, &mut noise_rng);
        let total_ticks = (spec.duration_s / sim.dt).round() as u64;
        let header = LogHeader {
            condition: spec.mode,
            seed,
            duration_s: spec.duration_s,
            dt: sim.dt,
            config_hash: opts.config_hash.clone(),
            arena_hash: arena_hash(arena),
            snapshot_hash: sha256_hex(&spec.start_snapshot),
            start_snapshot: hex::encode(&spec.start_snapshot),
            learning: spec.learning,
            sim: *sim,
            arena: arena.clone(),
            initial_state: initial,
            fall_policy: opts.fall_policy,
        };
        Ok(Session {
            arena: arena.clone(),
            sim: *sim,
            learning: spec.learning,
            pair,
            state: initial,
            sensors,
            tick: 0,
            total_ticks,
            noise_rng,
            respawn_rng: rng_stream(seed, Stream::Respawn),
            walls: Vec::new(),
            paused: false,
            finished: total_ticks == 0,
            log: SessionLog {
                header,
                rows: Vec::with_capacity(total_ticks as usize),
                events: Vec::new(),
                footer: None,
            },
        })
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn networks(&self) -> &NetworkPair {
        &self.pair
    }

    pub fn arena(&self) -> &ArenaSpec {
        &self.arena
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Session time at the start of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.sim.dt
    }

    pub fn next_tick(&self) -> u64 {
        self.tick + 1
    }

    pub fn last_row(&self) -> Option<&TickRow> {
        self.log.rows.last()
    }

    fn record(&mut self, kind: SessionEventKind) {
        self.log.events.push(SessionEvent {
            tick: self.tick + 1,
            t: self.time(),
            kind,
        });
    }

    pub fn pause(&mut self, reason: &str) {
        if !self.paused && !self.finished {
            self.paused = true;
            self.record(SessionEventKind::Pause { reason: reason.to_string() });
        }
    }

    pub fn resume(&mut self) {
        if self.paused && !self.finished {
            self.paused = false;
            self.record(SessionEventKind::Resume);
        }
    }

    /// Runs one control tick: sense → act → move → adapt.
    pub fn tick(&mut self, interactions: Vec<InteractionEvent>) -> Result<&TickRow, ExperimentError> {
        if self.finished {
            return Err(ExperimentError::SessionFinished);
        }
        if self.paused {
            return Err(ExperimentError::SessionPaused);
        }
        let now = self.time();
        let mut active = Vec::new();
        for ev in interactions {
            let ev = ev.sanitized();
            self.record(SessionEventKind::Interaction { event: ev });
            match ev.kind {
                InteractionKind::HandWall { .. } => self.walls.push(ev),
                InteractionKind::Nudge { .. } => active.push(ev),
            }
        }
        self.walls
            .retain(|w| matches!(w.kind, InteractionKind::HandWall { expiry, .. } if expiry > now));
        active.extend(self.walls.iter().copied());

        let motors = pi::controller_step(&self.pair.controller, &self.sensors)?;
        let cmd = sim::motor_to_command(&motors, &self.sim);
        let mut next = sim::step(&self.state, cmd, &self.arena, &active, &self.sim)?;
        let mut learning = self.learning;
        if next.fallen {
            self.record(SessionEventKind::Fall { position: [next.position.x, next.position.y] });
            match self.log.header.fall_policy {
                FallPolicy::Respawn => {
                    next = center_start(&self.arena, &mut self.respawn_rng);
                    self.record(SessionEventKind::Respawn { state: next });
                    self.walls.clear();
                    // the teleport is not a sensorimotor transition
                    learning.adapting = false;
                }
                FallPolicy::End => self.finished = true,
            }
        }
        let sensed = sim::sense(&next, &self.arena, &self.sim, &mut self.noise_rng);
        let (pair, diagnostics) = pi::update_step(&self.pair, &self.sensors, &sensed, &learning)?;

        self.tick += 1;
        self.log.rows.push(TickRow {
            tick: self.tick,
            t: self.tick as f64 * self.sim.dt,
            state: next,
            sensors: self.sensors,
            motors,
            diagnostics,
        });
        self.pair = pair;
        self.state = next;
        self.sensors = sensed;
        if self.tick >= self.total_ticks {
            self.finished = true;
        }
        Ok(self.log.rows.last().expect("row just pushed"))
    }

    /// Closes the log; further ticks are rejected.
    pub fn finish(mut self) -> SessionLog {
        let bytes = pi::snapshot(&self.pair);
        self.log.footer = Some(LogFooter {
            rows: self.log.rows.len() as u64,
            final_snapshot_hash: sha256_hex(&bytes),
            final_snapshot: hex::encode(&bytes),
            ended_by_fall: self.state.fallen,
        });
        self.log
    }
}

/// Runs a whole condition headlessly.
pub fn run_condition(
    spec: &ConditionSpec,
    arena: &ArenaSpec,
    sim: &SimConfig,
    interactor: &mut dyn Interactor,
    seed: u64,
    opts: &RunOptions,
) -> Result<SessionLog, ExperimentError> {
    let mut session = Session::new(spec, arena, sim, seed, opts)?;
    while !session.is_finished() {
        let events = interactor.events(session.next_tick(), session.time(), session.state(), &session.arena);
        session.tick(events)?;
    }
    Ok(session.finish())
}

/// Re-executes a log from its header and logged interactions and checks
/// that every record comes out identical.
pub fn replay(log: &SessionLog) -> Result<(), ExperimentError> {
    let h = &log.header;
    let snapshot = hex::decode(&h.start_snapshot).map_err(|e| ExperimentError::Log(format!("start snapshot: {e}")))?;
    if sha256_hex(&snapshot) != h.snapshot_hash {
        return Err(ExperimentError::ReplayMismatch("snapshot hash".into()));
    }
    if arena_hash(&h.arena) != h.arena_hash {
        return Err(ExperimentError::ReplayMismatch("arena hash".into()));
    }
    let spec = ConditionSpec {
        mode: h.condition,
        duration_s: h.duration_s,
        start_snapshot: snapshot,
        learning: h.learning,
    };
    let opts = RunOptions {
        config_hash: h.config_hash.clone(),
        initial_state: Some(h.initial_state),
        fall_policy: h.fall_policy,
    };
    let mut session = Session::new(&spec, &h.arena, &h.sim, h.seed, &opts)?;
    let mut interactor = ReplayInteractor::new(log.interaction_events());
    let mut pauses = log.events.iter().filter(|e| {
        matches!(e.kind, SessionEventKind::Pause { .. } | SessionEventKind::Resume)
    });
    let mut pending = pauses.next();
    for row in &log.rows {
        // pause/resume records carry no simulation effect but must reappear in order
        while let Some(ev) = pending.filter(|e| e.tick <= row.tick) {
            match &ev.kind {
                SessionEventKind::Pause { reason } => session.pause(reason),
                _ => session.resume(),
            }
            pending = pauses.next();
        }
        if session.is_finished() {
            return Err(ExperimentError::ReplayMismatch(format!("session ended before tick {}", row.tick)));
        }
        let events = interactor.events(session.next_tick(), session.time(), session.state(), &h.arena);
        let got = session.tick(events)?;
        if serde_json::to_string(got).ok() != serde_json::to_string(row).ok() {
            return Err(ExperimentError::ReplayMismatch(format!("tick {}", row.tick)));
        }
    }
    while let Some(ev) = pending {
        match &ev.kind {
            SessionEventKind::Pause { reason } => session.pause(reason),
            _ => session.resume(),
        }
        pending = pauses.next();
    }
    let rerun = session.finish();
    if rerun.events != log.events {
        return Err(ExperimentError::ReplayMismatch("event records".into()));
    }
    if log.footer.is_some() && rerun.footer != log.footer {
        return Err(ExperimentError::ReplayMismatch("final networks".into()));
    }
    Ok(())
}
