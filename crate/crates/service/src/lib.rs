//! Realtime gateway for the glove simulation.
//!
//! * `GET /ws`: websocket. The server sends a `hello`, then one `snapshot`
//!   message per frame (50 Hz by default). Clients send operator commands
//!   as JSON (`{"cmd": "trigger_intent"}`, optionally with an `id`) and get
//!   an `ack` or `rejected` reply.
//! * `GET /health`, `GET /snapshot`, `GET /scenarios`, `GET /reports`,
//!   `GET /reports/{name}`, `GET /log`, `POST /command`.
//! * Anything else is served from the console directory, if configured.

mod driver;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use reglove_core::harness::HarnessError;
use reglove_core::session::{OperatorCommand, Rejection, SNAPSHOT_SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast::error::RecvError;
use tower_http::services::ServeDir;

pub use driver::{Driver, DriverConfig, DriverHandle};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Session(#[from] HarnessError),
    #[error("io: {0}")]
    Io(std::io::Error),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("simulation driver has stopped")]
    DriverGone,
}

/// Client -> server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub command: OperatorCommand,
}

/// Server -> client. Snapshots are sent pre-serialized, so this covers the
/// other kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello { schema_version: u32 },
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        frame: u64,
    },
    Rejected {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        error: String,
        reason: String,
    },
}

impl ServerMessage {
    fn from_result(id: Option<u64>, result: Result<u64, Rejection>) -> Self {
        match result {
            Ok(frame) => ServerMessage::Ack { id, frame },
            Err(r) => ServerMessage::Rejected { id, error: r.error, reason: r.reason },
        }
    }

    fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

/// Wraps a serialized snapshot as a `{"type": "snapshot", ...}` message.
fn snapshot_message(snapshot: &str) -> String {
    debug_assert!(snapshot.starts_with('{'));
    format!("{{\"type\":\"snapshot\",{}", &snapshot[1..])
}

pub fn router(driver: DriverHandle, console_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/health", get(health))
        .route("/snapshot", get(snapshot))
        .route("/scenarios", get(scenarios))
        .route("/reports", get(report_names))
        .route("/reports/{name}", get(report))
        .route("/log", get(command_log))
        .route("/command", post(command))
        .with_state(driver);
    match console_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn internal(e: ServiceError) -> Response {
    (StatusCode::SERVICE_UNAVAILABLE, e.to_string()).into_response()
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn health(State(d): State<DriverHandle>) -> Response {
    let latest = d.latest();
    let seq = serde_json::from_str::<serde_json::Value>(&latest)
        .ok()
        .and_then(|v| v["seq"].as_u64());
    Json(serde_json::json!({
        "status": "ok",
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "seq": seq,
    }))
    .into_response()
}

async fn snapshot(State(d): State<DriverHandle>) -> Response {
    json_text(d.latest().to_string())
}

async fn scenarios(State(d): State<DriverHandle>) -> Response {
    match d.scenarios().await {
        Ok(names) => Json(names).into_response(),
        Err(e) => internal(e),
    }
}

async fn report_names(State(d): State<DriverHandle>) -> Response {
    match d.reports().await {
        Ok(r) => Json(r.keys().cloned().collect::<Vec<_>>()).into_response(),
        Err(e) => internal(e),
    }
}

async fn report(State(d): State<DriverHandle>, Path(name): Path<String>) -> Response {
    match d.reports().await {
        Ok(r) => match r.get(&name) {
            Some(report) => json_text(report.to_json()),
            None => (StatusCode::NOT_FOUND, format!("no report named {name:?}")).into_response(),
        },
        Err(e) => internal(e),
    }
}

async fn command_log(State(d): State<DriverHandle>) -> Response {
    match d.log().await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response(),
        Err(e) => internal(e),
    }
}

async fn command(State(d): State<DriverHandle>, body: String) -> Response {
    let reply = match serde_json::from_str::<ClientMessage>(&body) {
        Ok(msg) => match d.command(msg.command).await {
            Ok(result) => ServerMessage::from_result(msg.id, result),
            Err(e) => return internal(e),
        },
        Err(e) => ServerMessage::Rejected { id: None, error: "malformed".into(), reason: e.to_string() },
    };
    let status = match reply {
        ServerMessage::Rejected { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::OK,
    };
    (status, json_text(reply.to_text())).into_response()
}

async fn ws_upgrade(State(d): State<DriverHandle>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| client(socket, d))
}

async fn client(mut socket: WebSocket, driver: DriverHandle) {
    let mut snapshots = driver.subscribe();
    let hello = ServerMessage::Hello { schema_version: SNAPSHOT_SCHEMA_VERSION };
    if socket.send(WsMessage::Text(hello.to_text().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            snap = snapshots.recv() => match snap {
                Ok(s) => {
                    if socket.send(WsMessage::Text(snapshot_message(&s).into())).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    // slow client: drop the backlog and continue from the newest
                    log::debug!("client lagged by {n} snapshots");
                    snapshots = snapshots.resubscribe();
                }
                Err(RecvError::Closed) => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(WsMessage::Text(text))) => {
                    let reply = match serde_json::from_str::<ClientMessage>(&text) {
                        Ok(msg) => match driver.command(msg.command).await {
                            Ok(result) => ServerMessage::from_result(msg.id, result),
                            Err(_) => break,
                        },
                        Err(e) => ServerMessage::Rejected {
                            id: None,
                            error: "malformed".into(),
                            reason: e.to_string(),
                        },
                    };
                    if socket.send(WsMessage::Text(reply.to_text().into())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}

pub struct ServeOptions {
    pub addr: SocketAddr,
    pub driver: DriverConfig,
    pub console_dir: Option<PathBuf>,
}

/// Binds, runs until Ctrl-C, then stops the driver (which closes the
/// command log).
pub async fn serve(opts: ServeOptions) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(opts.addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: opts.addr, source })?;
    let driver = Driver::spawn(opts.driver)?;
    let app = router(driver.handle(), opts.console_dir);
    log::info!("listening on {}", listener.local_addr().map_err(ServiceError::Io)?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Io)?;
    // the blocking join happens off the async workers
    let _ = tokio::task::spawn_blocking(move || driver.shutdown()).await;
    Ok(())
}

/// Keeps the type in the public API for callers that hold snapshots.
pub type SerializedSnapshot = Arc<str>;
