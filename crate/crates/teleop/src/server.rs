//! WebSocket front end.
//!
//! - `GET /ws`: pilot socket (one at a time; others get `occupied`)
//! - `GET /observe`: read-only telemetry socket, any number
//! - `GET /policy`: clamp limits for clients to mirror
//! - `GET /stats`: gateway counters
//!
//! Virtual time follows the wall clock: a ticker advances the gateway once
//! per bus period, and every incoming frame first catches the gateway up to
//! the current instant so it is stamped with its arrival time.

use std::future::Future;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};

use crate::clamp::ClampPolicy;
use crate::gateway::{Gateway, GatewayConfig, GatewayStats, PilotId};
use crate::protocol::{parse_client, ClientMessage, ErrorCode, ServerMessage};
use crate::TeleopError;

struct Engine {
    gateway: Gateway,
    start: Instant,
    pilot: Option<(PilotId, UnboundedSender<String>)>,
    observers: Vec<UnboundedSender<String>>,
}

impl Engine {
    fn catch_up(&mut self) {
        let now = self.start.elapsed().as_secs_f64() * 1000.0;
        let msgs = match self.gateway.advance_to(now) {
            Ok(m) => m,
            Err(e) => vec![e.to_message()],
        };
        for m in msgs {
            self.fan_out(&m.to_json());
        }
    }

    fn fan_out(&mut self, text: &str) {
        if let Some((_, tx)) = &self.pilot {
            let _ = tx.send(text.to_owned());
        }
        self.observers.retain(|tx| tx.send(text.to_owned()).is_ok());
    }
}

#[derive(Clone)]
struct App(Arc<Mutex<Engine>>);

impl App {
    fn lock(&self) -> MutexGuard<'_, Engine> {
        // a panic while holding the lock leaves consistent-enough state for
        // telemetry; keep serving
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyInfo {
    pub device_limit: ClampPolicy,
    pub joint_limit_rad: f64,
    pub n_joints: usize,
    pub loop_rate_hz: f64,
    pub hold_after_ms: f64,
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    cfg: GatewayConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), TeleopError> {
    let gateway = Gateway::new(cfg)?;
    let period = Duration::from_secs_f64(gateway.period_ms() / 1000.0);
    let app = App(Arc::new(Mutex::new(Engine {
        gateway,
        start: Instant::now(),
        pilot: None,
        observers: Vec::new(),
    })));

    let ticker = {
        let app = app.clone();
        tokio::spawn(async move {
            let mut iv = tokio::time::interval(period);
            iv.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                iv.tick().await;
                app.lock().catch_up();
            }
        })
    };

    let router = Router::new()
        .route("/ws", get(pilot_ws))
        .route("/observe", get(observe_ws))
        .route("/policy", get(policy))
        .route("/stats", get(stats))
        .with_state(app);
    let result = axum::serve(listener, router).with_graceful_shutdown(shutdown).await;
    ticker.abort();
    result.map_err(TeleopError::from)
}

async fn policy(State(app): State<App>) -> Json<PolicyInfo> {
    let e = app.lock();
    let cfg = e.gateway.config();
    Json(PolicyInfo {
        device_limit: cfg.policy,
        joint_limit_rad: cfg.geometry.joint_limit,
        n_joints: cfg.geometry.n_joints(),
        loop_rate_hz: cfg.bus.loop_rate,
        hold_after_ms: cfg.hold_after_ms,
    })
}

async fn stats(State(app): State<App>) -> Json<GatewayStats> {
    Json(app.lock().gateway.stats())
}

async fn pilot_ws(ws: WebSocketUpgrade, State(app): State<App>) -> Response {
    ws.on_upgrade(move |socket| pilot_session(socket, app))
}

async fn observe_ws(ws: WebSocketUpgrade, State(app): State<App>) -> Response {
    ws.on_upgrade(move |socket| observer_session(socket, app))
}

/// Forwards queued text to the socket until the channel closes.
fn spawn_writer(
    mut sink: futures_util::stream::SplitSink<WebSocket, Message>,
) -> (UnboundedSender<String>, tokio::task::JoinHandle<()>) {
    let (tx, mut rx) = unbounded_channel::<String>();
    let task = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    });
    (tx, task)
}

async fn pilot_session(socket: WebSocket, app: App) {
    let (sink, mut stream) = socket.split();
    let (tx, writer) = spawn_writer(sink);
    let id = {
        let mut e = app.lock();
        e.catch_up();
        match e.gateway.connect_pilot() {
            Ok(id) => {
                e.pilot = Some((id, tx.clone()));
                Some(id)
            }
            Err(err) => {
                let _ = tx.send(err.to_message().to_json());
                None
            }
        }
    };
    let Some(id) = id else {
        drop(tx);
        let _ = writer.await;
        return;
    };

    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => {
                let mut e = app.lock();
                e.catch_up();
                let reply = match parse_client(&text) {
                    Ok(ClientMessage::Frame(frame)) => e.gateway.submit(id, &frame).err().map(|err| err.to_message()),
                    Err(err) => Some(ServerMessage::error(ErrorCode::BadMessage, err.to_string())),
                };
                if let Some(reply) = reply {
                    let _ = tx.send(reply.to_json());
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }

    {
        let mut e = app.lock();
        e.gateway.disconnect(id);
        if e.pilot.as_ref().is_some_and(|(p, _)| *p == id) {
            e.pilot = None;
        }
    }
    drop(tx);
    let _ = writer.await;
}

async fn observer_session(socket: WebSocket, app: App) {
    let (sink, mut stream) = socket.split();
    let (tx, writer) = spawn_writer(sink);
    app.lock().observers.push(tx.clone());
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(_) => {
                let _ = tx.send(TeleopError::NotPilot.to_message().to_json());
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    app.lock().observers.retain(|o| !o.same_channel(&tx));
    drop(tx);
    let _ = writer.await;
}
