//! Live session service.
//!
//! Each WebSocket connection gets its own session loop. Inbound messages go
//! through an unbounded queue, so events are never lost. State updates go
//! through a latest-value slot, so a client that stops reading only misses
//! stale frames and never holds up the simulation. Acks, errors and phase
//! changes share the unbounded control channel.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::Context;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tipi_core::config::ExperimentConfig;
use tipi_core::experiment::{Condition, ConditionSpec, FallPolicy, RunOptions, Session};
use tipi_core::sim::{ArenaSpec, InteractionEvent, Segment, Vec2};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use crate::assets;
use crate::blind::BlindTable;
use crate::protocol::{ClientMessage, Phase, ServerMessage, StateUpdate};

/// Longest hand placement a client may request, s.
pub const MAX_HOLD_S: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub arena: ArenaSpec,
    pub experiment: ExperimentConfig,
    pub snapshot: Vec<u8>,
    /// When set, sessions start only from these tokens.
    pub blind: Option<BlindTable>,
    /// Directory of a built browser client.
    pub assets: Option<PathBuf>,
    /// Finished logs are also written here when set.
    pub log_dir: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    /// Send every n-th state update.
    pub decimate: u32,
}

impl ServerConfig {
    pub fn with_defaults(arena: ArenaSpec, experiment: ExperimentConfig, snapshot: Vec<u8>) -> Self {
        ServerConfig {
            arena,
            experiment,
            snapshot,
            blind: None,
            assets: None,
            log_dir: None,
            time_scale: 1.0,
            decimate: 1,
        }
    }

    fn tick_period(&self) -> Duration {
        Duration::from_secs_f64(self.experiment.sim.dt / self.time_scale)
    }
}

struct App {
    cfg: ServerConfig,
    logs: Mutex<HashMap<String, Arc<Vec<u8>>>>,
    sessions: AtomicU64,
}

pub fn router(cfg: ServerConfig) -> Router {
    let assets = cfg.assets.clone();
    let app = Arc::new(App { cfg, logs: Mutex::new(HashMap::new()), sessions: AtomicU64::new(0) });
    let router = Router::new()
        .route("/ws", get(ws_handler))
        .route("/logs/{file}", get(log_handler))
        .route("/healthz", get(|| async { "ok" }));
    let router = match assets {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(|| async { Html(assets::INDEX_HTML) })),
    };
    router.with_state(app)
}

/// Binds the listener (failing if the port is taken) and serves in the
/// background.
pub async fn spawn(cfg: ServerConfig, addr: SocketAddr) -> anyhow::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    let app = router(cfg);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((local, handle))
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, app))
}

async fn log_handler(Path(file): Path<String>, State(app): State<Arc<App>>) -> Response {
    let id = file.strip_suffix(".jsonl").unwrap_or(&file);
    let bytes = app.logs.lock().expect("log table poisoned").get(id).cloned();
    match bytes {
        Some(b) => ([(header::CONTENT_TYPE, "application/x-ndjson")], b.as_ref().clone()).into_response(),
        None => (StatusCode::NOT_FOUND, "no such log").into_response(),
    }
}

async fn connection(socket: WebSocket, app: Arc<App>) {
    let (mut sink, mut stream) = socket.split();
    let (ctl_tx, mut ctl_rx) = mpsc::unbounded_channel::<ServerMessage>();
    let (state_tx, mut state_rx) = watch::channel::<Option<StateUpdate>>(None);
    let (in_tx, in_rx) = mpsc::unbounded_channel::<ClientMessage>();

    let writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                biased;
                m = ctl_rx.recv() => match m {
                    Some(m) => m,
                    None => break,
                },
                changed = state_rx.changed() => {
                    if changed.is_err() {
                        // loop gone; flush remaining control messages
                        while let Ok(m) = ctl_rx.try_recv() {
                            let _ = send(&mut sink, &m).await;
                        }
                        break;
                    }
                    match *state_rx.borrow_and_update() {
                        Some(s) => ServerMessage::StateUpdate(s),
                        None => continue,
                    }
                }
            };
            if send(&mut sink, &msg).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let loop_ctl = ctl_tx.clone();
    let session = tokio::spawn(session_loop(app, in_rx, loop_ctl, state_tx));

    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        match serde_json::from_str::<ClientMessage>(&text) {
            Ok(m) => {
                if in_tx.send(m).is_err() {
                    break;
                }
            }
            Err(e) => {
                let _ = ctl_tx.send(ServerMessage::error("bad_message", e.to_string()));
            }
        }
    }
    drop(in_tx);
    drop(ctl_tx);
    let _ = session.await;
    let _ = writer.await;
}

async fn send<S>(sink: &mut S, msg: &ServerMessage) -> Result<(), axum::Error>
where
    S: SinkExt<Message, Error = axum::Error> + Unpin,
{
    let text = serde_json::to_string(msg).expect("message serializes");
    sink.send(Message::Text(text.into())).await
}

struct Live {
    id: String,
    session: Session,
    pending: Vec<InteractionEvent>,
}

/// Per-connection state: the phase and, while one is active, the session.
struct Conn {
    phase: Phase,
    live: Option<Live>,
}

async fn session_loop(
    app: Arc<App>,
    mut inbound: mpsc::UnboundedReceiver<ClientMessage>,
    ctl: mpsc::UnboundedSender<ServerMessage>,
    state: watch::Sender<Option<StateUpdate>>,
) {
    let mut conn = Conn { phase: Phase::Idle, live: None };
    let mut ticker = tokio::time::interval(app.cfg.tick_period());
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let decimate = u64::from(app.cfg.decimate.max(1));

    loop {
        tokio::select! {
            msg = inbound.recv() => match msg {
                Some(m) => handle(&app, &mut conn, m, &ctl),
                None => break,
            },
            _ = ticker.tick(), if conn.phase == Phase::Running => {
                let l = conn.live.as_mut().expect("running session");
                let events = std::mem::take(&mut l.pending);
                match l.session.tick(events).map(StateUpdate::from) {
                    Ok(update) => {
                        if update.tick % decimate == 0 || l.session.is_finished() {
                            state.send_replace(Some(update));
                        }
                    }
                    Err(e) => {
                        let _ = ctl.send(ServerMessage::error("session_failed", e.to_string()));
                    }
                }
                if l.session.is_finished() {
                    finish(&app, &mut conn, &ctl);
                }
            }
        }
    }
    // client went away mid-session: keep what was recorded
    finish(&app, &mut conn, &ctl);
}

fn handle(app: &App, conn: &mut Conn, msg: ClientMessage, ctl: &mpsc::UnboundedSender<ServerMessage>) {
    let reply = |m: ServerMessage| {
        let _ = ctl.send(m);
    };
    let phase = conn.phase;
    let refuse = |what: &str| {
        let _ = ctl.send(ServerMessage::error("bad_state", format!("cannot {what} while {phase:?}").to_lowercase()));
    };
    match msg {
        ClientMessage::Start { condition, seed, duration_s } => {
            if phase != Phase::Idle {
                return refuse("start");
            }
            match start(app, &condition, seed, duration_s) {
                Ok((l, started)) => {
                    conn.live = Some(l);
                    conn.phase = Phase::Running;
                    reply(started);
                    reply(ServerMessage::PhaseChanged { phase: Phase::Running, t: 0.0 });
                }
                Err(text) => reply(ServerMessage::error("bad_start", text)),
            }
        }
        ClientMessage::Pause | ClientMessage::Resume => {
            let (next, kind) = match msg {
                ClientMessage::Pause => (Phase::Paused, "pause"),
                _ => (Phase::Running, "resume"),
            };
            let from = if next == Phase::Paused { Phase::Running } else { Phase::Paused };
            if phase != from {
                return refuse(kind);
            }
            let l = conn.live.as_mut().expect("active session");
            if next == Phase::Paused {
                l.session.pause("operator");
            } else {
                l.session.resume();
            }
            conn.phase = next;
            let t = l.session.time();
            reply(ServerMessage::EventAck { event: kind.into(), t_received: t, applies_at: None });
            reply(ServerMessage::PhaseChanged { phase: next, t });
        }
        ClientMessage::Stop => {
            if !phase.can_become(Phase::Finished) {
                return refuse("stop");
            }
            let t = conn.live.as_ref().map_or(0.0, |l| l.session.time());
            reply(ServerMessage::EventAck { event: "stop".into(), t_received: t, applies_at: None });
            finish(app, conn, ctl);
        }
        ClientMessage::Nudge { .. } | ClientMessage::HandWall { .. } => {
            if phase != Phase::Running {
                return refuse(msg.kind());
            }
            let l = conn.live.as_mut().expect("running session");
            let t = l.session.time();
            let event = match msg {
                ClientMessage::Nudge { impulse } if finite(&impulse) => InteractionEvent::nudge(vec2(impulse), t),
                ClientMessage::HandWall { a, b, hold_s } if finite(&a) && finite(&b) && hold_s.is_finite() && hold_s > 0.0 => {
                    let seg = Segment { a: vec2(a), b: vec2(b) };
                    InteractionEvent::hand_wall(seg, t + hold_s.min(MAX_HOLD_S), t)
                }
                _ => return reply(ServerMessage::error("bad_message", "coordinates must be finite and hold_s positive")),
            };
            l.pending.push(event);
            reply(ServerMessage::EventAck {
                event: msg.kind().into(),
                t_received: t,
                applies_at: Some(l.session.next_tick()),
            });
        }
    }
}

fn finite(v: &[f64; 2]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn vec2(v: [f64; 2]) -> Vec2 {
    Vec2::new(v[0], v[1])
}

fn start(app: &App, condition: &str, seed: Option<u64>, duration_s: Option<f64>) -> Result<(Live, ServerMessage), String> {
    let cfg = &app.cfg;
    let mode: Condition = match &cfg.blind {
        Some(table) => table.resolve(condition).ok_or("unknown start token")?,
        None => condition.parse()?,
    };
    let number = app.sessions.fetch_add(1, Ordering::Relaxed) + 1;
    let id = format!("s{number:04}");
    let seed = seed.unwrap_or(number);
    let duration = duration_s.unwrap_or(cfg.experiment.session_duration_s);
    let spec = ConditionSpec::new(mode, duration, cfg.snapshot.clone(), cfg.experiment.learning);
    let opts = RunOptions {
        config_hash: cfg.experiment.hash(),
        initial_state: None,
        fall_policy: FallPolicy::End,
    };
    let session = Session::new(&spec, &cfg.arena, &cfg.experiment.sim, seed, &opts).map_err(|e| e.to_string())?;
    let started = ServerMessage::Started {
        session_id: id.clone(),
        seed,
        dt: cfg.experiment.sim.dt,
        duration_s: duration,
        condition: if cfg.blind.is_some() { None } else { Some(mode) },
    };
    tracing::info!(session = %id, seed, "session started");
    Ok((Live { id, session, pending: Vec::new() }, started))
}

/// Closes the active session, stores its log and tells the client where to
/// fetch it. No-op when nothing is active.
fn finish(app: &App, conn: &mut Conn, ctl: &mpsc::UnboundedSender<ServerMessage>) {
    let Some(l) = conn.live.take() else { return };
    conn.phase = Phase::Finished;
    let t = l.session.time();
    let fell = l.session.state().fallen;
    let log = l.session.finish();
    let bytes = log.to_jsonl_bytes();
    if let Some(dir) = &app.cfg.log_dir {
        let path = dir.join(format!("{}.jsonl", l.id));
        if let Err(e) = std::fs::write(&path, &bytes) {
            tracing::error!("writing {}: {e}", path.display());
        }
    }
    let rows = log.rows.len() as u64;
    app.logs.lock().expect("log table poisoned").insert(l.id.clone(), Arc::new(bytes));
    tracing::info!(session = %l.id, rows, "session finished");
    let _ = ctl.send(ServerMessage::PhaseChanged { phase: Phase::Finished, t });
    let _ = ctl.send(ServerMessage::Finished {
        log_url: format!("/logs/{}.jsonl", l.id),
        session_id: l.id,
        rows,
        fell,
    });
}
