use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::log::{SessionLog, TickRow};
use crate::sim::ArenaSpec;

/// Heading rates below this magnitude count as going straight, rad/s.
pub const TURN_THRESHOLD: f64 = 0.1;
/// Width of the band along the open edge, m.
pub const EDGE_BAND: f64 = 0.10;
/// Coverage grid cell size, m.
pub const GRID_CELL: f64 = 0.10;
/// An exit from the pit counts once the robot stays out this long, s.
pub const PIT_STAY_OUT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMetrics {
    pub pit_escape_time: Option<f64>,
    /// +1 all left turns, −1 all right turns.
    pub turn_bias: f64,
    pub edge_approaches: u32,
    pub coverage: f64,
    pub mean_speed: f64,
}

/// Time from first entering the pit to the first exit after which the robot
/// stays out for `stay_out` seconds.
pub fn pit_escape_time(rows: &[TickRow], arena: &ArenaSpec, dt: f64, stay_out: f64) -> Option<f64> {
    let inside: Vec<bool> = rows.iter().map(|r| arena.in_pit(r.state.position)).collect();
    let first = inside.iter().position(|&b| b)?;
    let entered = rows[first].t - dt;
    let needed = (stay_out / dt).round() as usize;
    let mut i = first;
    while i + 1 < rows.len() {
        if inside[i] && !inside[i + 1] {
            let exit = i + 1;
            let end = exit + needed;
            if end > rows.len() {
                return None;
            }
            if inside[exit..end].iter().all(|b| !b) {
                return Some(rows[exit].t - entered);
            }
        }
        i += 1;
    }
    None
}

pub fn behavior_metrics(log: &SessionLog) -> BehaviorMetrics {
    let arena = &log.header.arena;
    let rows = &log.rows;
    let (mut left, mut right) = (0u64, 0u64);
    for r in rows {
        if r.state.heading_rate > TURN_THRESHOLD {
            left += 1;
        } else if r.state.heading_rate < -TURN_THRESHOLD {
            right += 1;
        }
    }
    let turn_bias = if left + right == 0 {
        0.0
    } else {
        (left as f64 - right as f64) / (left + right) as f64
    };

    let mut edge_approaches = 0;
    let mut in_band = false;
    for r in rows {
        let now = arena.distance_to_open_edge(r.state.position) < EDGE_BAND;
        if now && !in_band {
            edge_approaches += 1;
        }
        in_band = now;
    }

    let nx = (arena.width / GRID_CELL).round() as i64;
    let ny = (arena.depth / GRID_CELL).round() as i64;
    let visited: HashSet<(i64, i64)> = rows
        .iter()
        .filter(|r| arena.contains(r.state.position))
        .map(|r| {
            let p = r.state.position;
            (
                ((p.x / GRID_CELL).floor() as i64).min(nx - 1),
                ((p.y / GRID_CELL).floor() as i64).min(ny - 1),
            )
        })
        .collect();
    let coverage = visited.len() as f64 / (nx * ny) as f64;

    let mean_speed = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.state.velocity().norm()).sum::<f64>() / rows.len() as f64
    };

    BehaviorMetrics {
        pit_escape_time: pit_escape_time(rows, arena, log.header.dt, PIT_STAY_OUT),
        turn_bias,
        edge_approaches,
        coverage,
        mean_speed,
    }
}
