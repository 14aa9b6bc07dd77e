//! Session logs: in-memory form, line-delimited JSON and CSV export.
//!
//! The JSONL stream starts with a `header` object, then per tick any `event`,
//! `fall`, `respawn`, `pause` or `resume` records for that tick followed by
//! its `row`, and ends with a `footer`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Condition, ExperimentError, FallPolicy};
use crate::pi::{LearningConfig, MotorVector, SensorVector, StepDiagnostics};
use crate::sim::{ArenaSpec, InteractionEvent, RobotState, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub condition: Condition,
    pub seed: u64,
    pub duration_s: f64,
    pub dt: f64,
    pub config_hash: String,
    pub arena_hash: String,
    pub snapshot_hash: String,
    /// Hex-encoded start snapshot.
    pub start_snapshot: String,
    pub learning: LearningConfig,
    pub sim: SimConfig,
    pub arena: ArenaSpec,
    pub initial_state: RobotState,
    pub fall_policy: FallPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    pub t: f64,
    pub state: RobotState,
    /// Reading the motor command was computed from.
    pub sensors: SensorVector,
    pub motors: MotorVector,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEventKind {
    Interaction { event: InteractionEvent },
    Fall { position: [f64; 2] },
    Respawn { state: RobotState },
    Pause { reason: String },
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Tick during which the event applies.
    pub tick: u64,
    pub t: f64,
    #[serde(flatten)]
    pub kind: SessionEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFooter {
    pub rows: u64,
    pub final_snapshot_hash: String,
    pub final_snapshot: String,
    pub ended_by_fall: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub rows: Vec<TickRow>,
    pub events: Vec<SessionEvent>,
    pub footer: Option<LogFooter>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Header(LogHeader),
    Event(SessionEvent),
    Row(TickRow),
    Footer(LogFooter),
}

impl SessionLog {
    pub fn interaction_events(&self) -> impl Iterator<Item = (u64, InteractionEvent)> + '_ {
        self.events.iter().filter_map(|e| match &e.kind {
            SessionEventKind::Interaction { event } => Some((e.tick, *event)),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let line = |rec: &Record, out: &mut W| -> std::io::Result<()> {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")
        };
        line(&Record::Header(self.header.clone()), &mut out)?;
        let mut events = self.events.iter().peekable();
        for row in &self.rows {
            while let Some(ev) = events.next_if(|e| e.tick <= row.tick) {
                line(&Record::Event(ev.clone()), &mut out)?;
            }
            line(&Record::Row(*row), &mut out)?;
        }
        for ev in events {
            line(&Record::Event(ev.clone()), &mut out)?;
        }
        if let Some(footer) = &self.footer {
            line(&Record::Footer(footer.clone()), &mut out)?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, ExperimentError> {
        let mut header = None;
        let mut rows = Vec::new();
        let mut events = Vec::new();
        let mut footer = None;
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ExperimentError::Log(format!("line {}: {e}", n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record =
                serde_json::from_str(&line).map_err(|e| ExperimentError::Log(format!("line {}: {e}", n + 1)))?;
            match rec {
                Record::Header(h) if n == 0 => header = Some(h),
                Record::Header(_) => return Err(ExperimentError::Log(format!("line {}: duplicate header", n + 1))),
                _ if header.is_none() => return Err(ExperimentError::Log("header must come first".into())),
                Record::Event(e) => events.push(e),
                Record::Row(r) => rows.push(r),
                Record::Footer(f) => footer = Some(f),
            }
        }
        let header = header.ok_or_else(|| ExperimentError::Log("empty log".into()))?;
        let log = SessionLog { header, rows, events, footer };
        log.check_rows()?;
        Ok(log)
    }

    /// Rows must advance by exactly one tick.
    pub fn check_rows(&self) -> Result<(), ExperimentError> {
        for (i, pair) in self.rows.windows(2).enumerate() {
            if pair[1].tick != pair[0].tick + 1 || !(pair[1].t > pair[0].t) {
                return Err(ExperimentError::Log(format!("row {} breaks tick sequence", i + 1)));
            }
            let spacing = pair[1].t - pair[0].t;
            if (spacing - self.header.dt).abs() > 1e-9 {
                return Err(ExperimentError::Log(format!("row {} spacing {spacing} != dt", i + 1)));
            }
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str = "tick,t,x,y,heading,speed,heading_rate,slip_x,slip_y,fallen,\
pitch,roll,acc_x,acc_y,gyro_z,speed_cmd,heading_rate_cmd,pi_value,prediction_error_sq,\
controller_grad_norm,model_grad_norm,update_skipped";

    /// One line per tick, columns as in [`Self::CSV_HEADER`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| ExperimentError::Log(e.to_string());
        w.write_record(Self::CSV_HEADER.split(',')).map_err(io)?;
        for r in &self.rows {
            let s = &r.state;
            let d = &r.diagnostics;
            let fields = [
                r.tick.to_string(),
                r.t.to_string(),
                s.position.x.to_string(),
                s.position.y.to_string(),
                s.heading.to_string(),
                s.speed.to_string(),
                s.heading_rate.to_string(),
                s.slip.x.to_string(),
                s.slip.y.to_string(),
                s.fallen.to_string(),
                r.sensors.pitch.to_string(),
                r.sensors.roll.to_string(),
                r.sensors.acc_x.to_string(),
                r.sensors.acc_y.to_string(),
                r.sensors.gyro_z.to_string(),
                r.motors.speed_cmd.to_string(),
                r.motors.heading_rate_cmd.to_string(),
                d.pi_value.to_string(),
                d.prediction_error_sq.to_string(),
                d.controller_grad_norm.to_string(),
                d.model_grad_norm.to_string(),
                d.update_skipped.to_string(),
            ];
            w.write_record(&fields).map_err(io)?;
        }
        w.flush().map_err(|e| ExperimentError::Log(e.to_string()))?;
        Ok(())
    }
}
