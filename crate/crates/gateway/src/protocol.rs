//! JSON messages exchanged over the `/ws` WebSocket, one message per text
//! frame. Every message carries a `type` tag in snake case.
//!
//! Units: positions in metres in the arena frame (origin at the bottom-left
//! corner), headings in radians with 0 along +x, speeds and impulses in m/s,
//! times in seconds of session time.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tipi_core::experiment::{Condition, TickRow};

/// Session lifecycle: idle → running ⇄ paused → finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Running,
    Paused,
    Finished,
}

impl Phase {
    pub fn can_become(self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Idle, Running) | (Running, Paused) | (Paused, Running) | (Running, Finished) | (Paused, Finished)
        )
    }
}

/// Client → server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// `condition` is `"rea"`/`"ada"`, or an opaque token when the service
    /// runs blind. Without a seed the session number is used.
    Start {
        condition: String,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        duration_s: Option<f64>,
    },
    /// Velocity impulse, m/s; longer vectors are clamped to 1 m/s.
    Nudge { impulse: [f64; 2] },
    /// Barrier from `a` to `b` (m, at most 0.5 m long) held for `hold_s`.
    HandWall { a: [f64; 2], b: [f64; 2], hold_s: f64 },
    Pause,
    Resume,
    /// Ends the session early; the log is kept.
    Stop,
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Start { .. } => "start",
            ClientMessage::Nudge { .. } => "nudge",
            ClientMessage::HandWall { .. } => "hand_wall",
            ClientMessage::Pause => "pause",
            ClientMessage::Resume => "resume",
            ClientMessage::Stop => "stop",
        }
    }
}

/// Server → client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Started {
        session_id: String,
        seed: u64,
        /// Tick length, s.
        dt: f64,
        duration_s: f64,
        /// Omitted in blind mode.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<Condition>,
    },
    StateUpdate(StateUpdate),
    /// Receipt of an inbound message. Interaction events take effect on
    /// tick `applies_at`.
    EventAck {
        event: String,
        t_received: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        applies_at: Option<u64>,
    },
    PhaseChanged {
        phase: Phase,
        t: f64,
    },
    /// The session is over; its log is at `log_url`.
    Finished {
        session_id: String,
        rows: u64,
        fell: bool,
        log_url: String,
    },
    Error {
        code: String,
        text: String,
    },
}

impl ServerMessage {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub tick: u64,
    pub t: f64,
    pub position: [f64; 2],
    pub heading: f64,
    /// Driven speed along the heading.
    pub speed: f64,
    /// Total ground velocity including slip.
    pub velocity: [f64; 2],
    pub pi_value: f64,
    pub prediction_error_sq: f64,
    pub fallen: bool,
}

impl From<&TickRow> for StateUpdate {
    fn from(row: &TickRow) -> Self {
        let v = row.state.velocity();
        StateUpdate {
            tick: row.tick,
            t: row.t,
            position: [row.state.position.x, row.state.position.y],
            heading: row.state.heading,
            speed: row.state.speed,
            velocity: [v.x, v.y],
            pi_value: row.diagnostics.pi_value,
            prediction_error_sq: row.diagnostics.prediction_error_sq,
            fallen: row.state.fallen,
        }
    }
}

/// Whether a serialized outbound message would tell a participant which
/// condition is running: a condition-like key, or a string value naming
/// either condition.
pub fn reveals_condition(msg: &Value) -> bool {
    match msg {
        Value::String(s) => {
            let s = s.to_ascii_lowercase();
            s == "rea" || s == "ada"
        }
        Value::Array(items) => items.iter().any(reveals_condition),
        Value::Object(map) => map.iter().any(|(k, v)| {
            matches!(k.as_str(), "condition" | "mode" | "adapting") || reveals_condition(v)
        }),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn inbound_wire_format() {
        let cases = [
            (json!({"type": "start", "condition": "7731-0042", "seed": 4}), ClientMessage::Start {
                condition: "7731-0042".into(),
                seed: Some(4),
                duration_s: None,
            }),
            (json!({"type": "nudge", "impulse": [0.5, 0.0]}), ClientMessage::Nudge { impulse: [0.5, 0.0] }),
            (
                json!({"type": "hand_wall", "a": [0.2, 0.0], "b": [0.6, 0.0], "hold_s": 1.5}),
                ClientMessage::HandWall { a: [0.2, 0.0], b: [0.6, 0.0], hold_s: 1.5 },
            ),
            (json!({"type": "pause"}), ClientMessage::Pause),
            (json!({"type": "resume"}), ClientMessage::Resume),
            (json!({"type": "stop"}), ClientMessage::Stop),
        ];
        for (wire, msg) in cases {
            assert_eq!(serde_json::from_value::<ClientMessage>(wire.clone()).unwrap(), msg);
            assert_eq!(serde_json::to_value(&msg).unwrap()["type"], wire["type"]);
        }
    }

    #[test]
    fn malformed_inbound_is_rejected() {
        for bad in [
            json!({"type": "teleport"}),
            json!({"type": "nudge"}),
            json!({"type": "nudge", "impulse": [1.0]}),
            json!({"impulse": [1.0, 0.0]}),
            json!("pause"),
        ] {
            assert!(serde_json::from_value::<ClientMessage>(bad).is_err());
        }
    }

    #[test]
    fn outbound_round_trip() {
        let update = StateUpdate {
            tick: 3,
            t: 0.15,
            position: [0.9, 0.6],
            heading: 1.0,
            speed: 0.2,
            velocity: [0.1, 0.17],
            pi_value: 0.4,
            prediction_error_sq: 0.01,
            fallen: false,
        };
        let msgs = [
            ServerMessage::Started { session_id: "s0001".into(), seed: 1, dt: 0.05, duration_s: 600.0, condition: None },
            ServerMessage::StateUpdate(update),
            ServerMessage::EventAck { event: "nudge".into(), t_received: 0.1, applies_at: Some(3) },
            ServerMessage::PhaseChanged { phase: Phase::Paused, t: 2.0 },
            ServerMessage::Finished { session_id: "s0001".into(), rows: 10, fell: false, log_url: "/logs/s0001.jsonl".into() },
            ServerMessage::error("bad_message", "expected value"),
        ];
        for m in msgs {
            let v = serde_json::to_value(&m).unwrap();
            assert!(v["type"].is_string());
            assert_eq!(serde_json::from_value::<ServerMessage>(v).unwrap(), m);
        }
        let v = serde_json::to_value(ServerMessage::StateUpdate(update)).unwrap();
        assert_eq!(v["type"], "state_update");
        assert_eq!(v["pi_value"], 0.4);
    }

    #[test]
    fn phase_transitions() {
        use Phase::*;
        let all = [Idle, Running, Paused, Finished];
        let allowed: Vec<(Phase, Phase)> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(
            allowed,
            vec![(Idle, Running), (Running, Paused), (Running, Finished), (Paused, Running), (Paused, Finished)]
        );
    }

    #[test]
    fn condition_audit() {
        let named = ServerMessage::Started {
            session_id: "s1".into(),
            seed: 1,
            dt: 0.05,
            duration_s: 1.0,
            condition: Some(Condition::Ada),
        };
        assert!(reveals_condition(&serde_json::to_value(named).unwrap()));
        let blind = ServerMessage::Started { session_id: "s1".into(), seed: 1, dt: 0.05, duration_s: 1.0, condition: None };
        assert!(!reveals_condition(&serde_json::to_value(blind).unwrap()));
        assert!(reveals_condition(&json!({"x": ["ok", "Rea"]})));
        assert!(reveals_condition(&json!({"adapting": true})));
        assert!(!reveals_condition(&json!({"text": "already ready for area"})));
    }
}
