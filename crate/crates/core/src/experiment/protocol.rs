use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::pit_escape_time;
use super::session::{rng_stream, run_condition, RunOptions, Stream};
use super::{Condition, ConditionSpec, ExperimentError, InteractorConfig, ScriptedInteractor};
use crate::config::ExperimentConfig;
use crate::exec;
use crate::pi::{self, NetworkPair};
use crate::sim::{ArenaSpec, RobotState, Vec2};

/// Runs the pre-adaptation trials from fresh networks and returns the
/// networks at the end of each.
pub fn preadapt(arena: &ArenaSpec, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<NetworkPair>, ExperimentError> {
    let pre = cfg.preadapt;
    let learning = cfg.learning.with_rate(pre.eps_controller);
    let trials: Vec<u64> = (0..pre.trials as u64).map(|i| exec::derive_seed(seed, i)).collect();
    let results = exec::map(&trials, |&trial_seed| -> Result<NetworkPair, ExperimentError> {
        let mut init_rng = rng_stream(trial_seed, Stream::Perturbation);
        let start = NetworkPair::random_init_with_model(&mut init_rng, pre.init_scale, pre.model_init_scale);
        let spec = ConditionSpec::new(Condition::Ada, pre.trial_duration_s, pi::snapshot(&start), learning);
        let mut interactor = ScriptedInteractor::new(cfg.interactor, rng_stream(trial_seed, Stream::Interactor));
        let opts = RunOptions {
            config_hash: cfg.hash(),
            ..RunOptions::default()
        };
        let log = run_condition(&spec, arena, &cfg.sim, &mut interactor, trial_seed, &opts)?;
        let skipped = log.rows.iter().filter(|r| r.diagnostics.update_skipped).count();
        if skipped * 10 > log.rows.len() {
            return Err(ExperimentError::Calibration(format!(
                "pre-adaptation trial {trial_seed}: {skipped} of {} updates non-finite",
                log.rows.len()
            )));
        }
        let footer = log.footer.expect("finished log has footer");
        let bytes = hex::decode(footer.final_snapshot).expect("footer snapshot is hex");
        Ok(pi::restore(&bytes)?)
    });
    results.into_iter().collect()
}

/// Uniform choice of the start networks; returns the index as well.
pub fn pick_start<R: Rng + ?Sized>(snapshots: &[NetworkPair], rng: &mut R) -> (usize, NetworkPair) {
    let i = rng.random_range(0..snapshots.len());
    (i, snapshots[i])
}

/// At rest somewhere within `radius_fraction` of the pit radius, random
/// heading.
pub fn pit_start_state(arena: &ArenaSpec, radius_fraction: f64, rng: &mut ChaCha8Rng) -> RobotState {
    let r = arena.pit.radius * radius_fraction * rng.random::<f64>().sqrt();
    let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    RobotState::at_rest(arena.pit_center() + Vec2::from_angle(a) * r, heading)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitTrial {
    pub seed: u64,
    pub escape_time: Option<f64>,
}

impl PitTrial {
    pub fn escaped_within(&self, limit: f64) -> bool {
        self.escape_time.is_some_and(|t| t < limit)
    }
}

/// One pit-start run at controller rate `eps` (0 = frozen networks), long
/// enough to confirm an escape just before the time limit.
pub fn run_pit_trial(
    arena: &ArenaSpec,
    cfg: &ExperimentConfig,
    start: &NetworkPair,
    eps: f64,
    seed: u64,
) -> Result<PitTrial, ExperimentError> {
    let cal = cfg.calibration;
    let mode = if eps > 0.0 { Condition::Ada } else { Condition::Rea };
    let duration = cal.escape_limit_s + cal.stay_out_s;
    let spec = ConditionSpec::new(mode, duration, pi::snapshot(start), cfg.learning.with_rate(eps));
    let initial = pit_start_state(arena, cal.start_radius_fraction, &mut rng_stream(seed, Stream::Start));
    // edge guarding only; nudges would knock the robot out of the pit
    let guard = InteractorConfig {
        nudge_rate: 0.0,
        ..cfg.interactor
    };
    let mut interactor = ScriptedInteractor::new(guard, rng_stream(seed, Stream::Interactor));
    let opts = RunOptions {
        config_hash: cfg.hash(),
        initial_state: Some(initial),
        ..RunOptions::default()
    };
    let log = run_condition(&spec, arena, &cfg.sim, &mut interactor, seed, &opts)?;
    Ok(PitTrial {
        seed,
        escape_time: pit_escape_time(&log.rows, arena, cfg.sim.dt, cal.stay_out_s),
    })
}

pub fn escape_success_rate(
    arena: &ArenaSpec,
    cfg: &ExperimentConfig,
    start: &NetworkPair,
    eps: f64,
    seeds: &[u64],
) -> Result<f64, ExperimentError> {
    let trials = exec::map(seeds, |&s| run_pit_trial(arena, cfg, start, eps, s));
    let mut ok = 0usize;
    for t in trials {
        if t?.escaped_within(cfg.calibration.escape_limit_s) {
            ok += 1;
        }
    }
    Ok(ok as f64 / seeds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub rate: f64,
    /// (rate, success fraction) for every grid point evaluated.
    pub grid: Vec<(f64, f64)>,
    pub seeds: usize,
}

/// Smallest rate on the doubling grid for which pit-start runs escape within
/// the limit often enough.
pub fn calibrate_ada_rate(
    arena: &ArenaSpec,
    cfg: &ExperimentConfig,
    start: &NetworkPair,
    seeds: &[u64],
) -> Result<CalibrationReport, ExperimentError> {
    if seeds.len() < 20 {
        return Err(ExperimentError::Calibration(format!("need at least 20 seeds, got {}", seeds.len())));
    }
    let cal = cfg.calibration;
    let mut grid = Vec::new();
    let mut rate = cal.grid_start;
    for _ in 0..cal.grid_steps {
        let success = escape_success_rate(arena, cfg, start, rate, seeds)?;
        grid.push((rate, success));
        if success >= cal.required_success {
            return Ok(CalibrationReport {
                rate,
                grid,
                seeds: seeds.len(),
            });
        }
        rate *= 2.0;
    }
    let table: Vec<String> = grid.iter().map(|(r, s)| format!("{r:.5}: {:.0}%", s * 100.0)).collect();
    Err(ExperimentError::Calibration(format!(
        "no rate reached {:.0}% escapes within {} s; grid [{}]",
        cal.required_success * 100.0,
        cal.escape_limit_s,
        table.join(", ")
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    /// ADA first, then REA.
    A,
    /// REA first, then ADA.
    B,
}

impl Order {
    pub fn conditions(self) -> [Condition; 2] {
        match self {
            Order::A => [Condition::Ada, Condition::Rea],
            Order::B => [Condition::Rea, Condition::Ada],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    /// `(participant_id, order)`, ids starting at 1.
    pub participants: Vec<(u32, Order)>,
}

impl GroupAssignment {
    pub fn count(&self, order: Order) -> usize {
        self.participants.iter().filter(|(_, o)| *o == order).count()
    }
}

/// Balanced random order assignment for `n` participants.
pub fn assign_groups<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<GroupAssignment, ExperimentError> {
    if n < 2 {
        return Err(ExperimentError::InvalidSpec(format!("need at least 2 participants, got {n}")));
    }
    let mut a_count = n / 2;
    if n % 2 == 1 && rng.random::<bool>() {
        a_count += 1;
    }
    let mut orders: Vec<Order> = (0..n).map(|i| if i < a_count { Order::A } else { Order::B }).collect();
    orders.shuffle(rng);
    Ok(GroupAssignment {
        participants: orders.into_iter().enumerate().map(|(i, o)| (i as u32 + 1, o)).collect(),
    })
}
