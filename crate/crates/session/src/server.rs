//! HTTP and WebSocket front end.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use mobias_core::scenario;
use mobias_core::{metric_names, parameter_specs, ModelKind, ParamSpec};
use serde::Serialize;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::outbox::{FrameEncoder, Outbox};
use crate::protocol::{ClientMessage, ErrorCode, ServerMessage, PROTOCOL_VERSION};
use crate::session::SessionManager;

pub const DEFAULT_PORT: u16 = 8765;
pub const PORT_ENV: &str = "MOBIAS_PORT";

/// Port from `MOBIAS_PORT`, else the default.
pub fn port_from_env() -> Result<u16, String> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v.parse().map_err(|_| format!("{PORT_ENV}={v} is not a port number")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Where per-session command logs go; none when unset.
    pub log_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)), static_dir: None, log_dir: None }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<SessionManager>,
}

pub fn router(config: &ServerConfig, sessions: Arc<SessionManager>) -> Router {
    let app = Router::new()
        .route("/ws", get(upgrade))
        .route("/api/scenarios", get(scenarios))
        .route("/api/models", get(models))
        .with_state(AppState { sessions });
    match &config.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(index)),
    }
}

/// A bound server, ready to run.
pub struct Server {
    listener: TcpListener,
    router: Router,
    sessions: Arc<SessionManager>,
}

impl Server {
    pub async fn bind(config: ServerConfig) -> std::io::Result<Self> {
        if let Some(dir) = &config.log_dir {
            std::fs::create_dir_all(dir)?;
        }
        let listener = TcpListener::bind(config.addr).await?;
        let sessions = Arc::new(SessionManager::new(config.log_dir.clone()));
        Ok(Self { router: router(&config, sessions.clone()), listener, sessions })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn sessions(&self) -> Arc<SessionManager> {
        self.sessions.clone()
    }

    pub async fn run(self) -> std::io::Result<()> {
        tracing::info!("listening on {}", self.listener.local_addr()?);
        let result = axum::serve(self.listener, self.router).await;
        self.sessions.shutdown();
        result
    }

    /// Serve until `signal` resolves, then close every session.
    pub async fn run_until(self, signal: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let result = axum::serve(self.listener, self.router).with_graceful_shutdown(signal).await;
        self.sessions.shutdown();
        result
    }
}

async fn index() -> Html<&'static str> {
    Html("<!doctype html><title>mobias</title><p>mobias session service. Connect a client to <code>/ws</code>.</p>\n")
}

#[derive(Serialize)]
struct ScenarioInfo {
    name: String,
    model: ModelKind,
    description: String,
    replications: u32,
    base_seed: u64,
}

async fn scenarios() -> impl IntoResponse {
    let list: Vec<ScenarioInfo> = scenario::builtin_names()
        .into_iter()
        .filter_map(|name| scenario::builtin(name).ok())
        .map(|s| ScenarioInfo { name: s.name, model: s.model, description: s.description, replications: s.replications, base_seed: s.base_seed })
        .collect();
    Json(list)
}

#[derive(Serialize)]
struct ModelInfo {
    model: ModelKind,
    parameters: Vec<ParamSpec>,
    metrics: Vec<String>,
}

async fn models() -> impl IntoResponse {
    let list: Vec<ModelInfo> = ModelKind::ALL
        .into_iter()
        .map(|model| ModelInfo { model, parameters: parameter_specs(model), metrics: metric_names(model) })
        .collect();
    Json(list)
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state.sessions))
}

pub fn hello() -> ServerMessage {
    ServerMessage::Hello {
        protocol_version: PROTOCOL_VERSION,
        models: ModelKind::ALL.to_vec(),
        scenarios: scenario::builtin_names().into_iter().map(str::to_string).collect(),
    }
}

async fn connection(socket: WebSocket, sessions: Arc<SessionManager>) {
    let connection = sessions.connection_id();
    tracing::debug!(connection, "client connected");
    let (mut tx, mut rx) = socket.split();
    let outbox = Outbox::new(connection);
    outbox.send(hello());

    let writer_box = outbox.clone();
    let writer = tokio::spawn(async move {
        let mut encoder = FrameEncoder::default();
        loop {
            let batch = writer_box.next_batch().await;
            if batch.is_empty() {
                break;
            }
            for message in encoder.encode(batch) {
                if tx.send(Message::Text(message.to_json().into())).await.is_err() {
                    writer_box.close();
                    return;
                }
            }
        }
        let _ = tx.close().await;
    });

    while let Some(Ok(message)) = rx.next().await {
        match message {
            Message::Text(text) => match serde_json::from_str::<ClientMessage>(&text) {
                Ok(m) => sessions.dispatch(m, &outbox),
                Err(e) => outbox.send(ServerMessage::error(None, None, ErrorCode::BadRequest, e.to_string())),
            },
            Message::Binary(_) => outbox.send(ServerMessage::error(None, None, ErrorCode::BadRequest, "binary messages are not part of the protocol")),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => {}
        }
        if outbox.is_closed() {
            break;
        }
    }
    sessions.disconnect(connection);
    outbox.close();
    let _ = writer.await;
    tracing::debug!(connection, "client disconnected");
}
