//! HTTP and WebSocket front end of the relay.
//!
//! Routes:
//!
//! * `GET /` presentation page with the number of live sessions
//! * `GET /healthz` liveness probe
//! * `GET /in/{id}` patient WebSocket
//! * `GET /{id}` doctor page, only while a patient streams on `id`
//! * `GET /out/{id}` doctor WebSocket

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tokio::time::{interval_at, Instant, MissedTickBehavior};

use crate::page;
use crate::registry::{DoctorLink, PatientLink, Registry, RegistryConfig, RelayError, SessionId};

/// Close code sent to the doctor when the patient's stream ends.
pub const CLOSE_PATIENT_GONE: u16 = 4001;
pub const REASON_PATIENT_GONE: &str = "patient gone";
/// Close code sent when the relay shuts down.
pub const CLOSE_RELAY_SHUTDOWN: u16 = 1001;
/// Close code sent after too many unanswered pings.
pub const CLOSE_HEARTBEAT_TIMEOUT: u16 = 4002;

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub registry: RegistryConfig,
    pub ping_interval: Duration,
    /// Connections are dropped after this many consecutive unanswered pings.
    pub max_missed_pongs: u32,
    /// Page served at `/{id}`; `{{SESSION_ID}}` is replaced with the id.
    pub viewer_page: Option<String>,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            registry: RegistryConfig::default(),
            ping_interval: Duration::from_secs(20),
            max_missed_pongs: 2,
            viewer_page: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    registry: Arc<Registry>,
    config: Arc<RelayConfig>,
    shutdown: watch::Receiver<bool>,
}

pub fn router(registry: Arc<Registry>, config: RelayConfig, shutdown: watch::Receiver<bool>) -> Router {
    let state = AppState {
        registry,
        config: Arc::new(config),
        shutdown,
    };
    Router::new()
        .route("/", get(index))
        .route("/healthz", get(healthz))
        .route("/in/{id}", get(patient_ws))
        .route("/out/{id}", get(doctor_ws))
        .route("/{id}", get(doctor_page))
        .with_state(state)
}

/// A relay bound to a socket and serving in the background.
pub struct RelayServer {
    addr: SocketAddr,
    registry: Arc<Registry>,
    shutdown: watch::Sender<bool>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RelayServer {
    pub async fn bind(addr: impl tokio::net::ToSocketAddrs, config: RelayConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        Ok(Self::serve(listener, config))
    }

    pub fn serve(listener: TcpListener, config: RelayConfig) -> Self {
        let addr = listener.local_addr().expect("bound listener has an address");
        let registry = Registry::new(config.registry.clone());
        let (shutdown, rx) = watch::channel(false);
        let app = router(Arc::clone(&registry), config, rx.clone());
        let mut stop = rx;
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = stop.wait_for(|s| *s).await;
                })
                .await
        });
        RelayServer {
            addr,
            registry,
            shutdown,
            task,
        }
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Closes every WebSocket, stops accepting and waits for the server task.
    pub async fn stop(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(true);
        match self.task.await {
            Ok(result) => result,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }
}

fn parse_id(raw: &str) -> Result<SessionId, Box<Response>> {
    raw.parse().map_err(|e: crate::registry::InvalidSessionId| {
        Box::new((StatusCode::BAD_REQUEST, e.to_string()).into_response())
    })
}

fn negative_reply(err: RelayError) -> Response {
    let status = match err {
        RelayError::NoPatient => StatusCode::NOT_FOUND,
        RelayError::DuplicateSession | RelayError::DoctorTaken => StatusCode::CONFLICT,
        RelayError::TooManySessions => StatusCode::SERVICE_UNAVAILABLE,
    };
    (status, format!("{err}\n")).into_response()
}

async fn index(State(state): State<AppState>) -> Html<String> {
    Html(page::index(state.registry.live_sessions()))
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    let shutting_down = *state.shutdown.borrow();
    Json(serde_json::json!({
        "live": true,
        "ready": !shutting_down,
        "sessions": state.registry.live_sessions(),
    }))
}

async fn doctor_page(State(state): State<AppState>, Path(raw): Path<String>) -> Response {
    let id = match parse_id(&raw) {
        Ok(id) => id,
        Err(resp) => return *resp,
    };
    match state.registry.check_doctor(&id) {
        Ok(()) => Html(page::viewer(state.config.viewer_page.as_deref(), &id)).into_response(),
        Err(err) => negative_reply(err),
    }
}

async fn patient_ws(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    upgrade: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Response {
    let id = match parse_id(&raw) {
        Ok(id) => id,
        Err(resp) => return *resp,
    };
    let upgrade = match upgrade {
        Ok(upgrade) => upgrade,
        Err(rejection) => return rejection.into_response(),
    };
    match state.registry.connect_patient(&id) {
        Ok(link) => {
            tracing::info!(session = %id, "patient connected");
            // If the upgrade fails the closure is dropped with the link,
            // which releases the id again.
            upgrade.on_upgrade(move |socket| run_patient(socket, link, state))
        }
        Err(err) => {
            tracing::info!(session = %id, %err, "patient rejected");
            negative_reply(err)
        }
    }
}

async fn doctor_ws(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    upgrade: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Response {
    let id = match parse_id(&raw) {
        Ok(id) => id,
        Err(resp) => return *resp,
    };
    let upgrade = match upgrade {
        Ok(upgrade) => upgrade,
        Err(rejection) => return rejection.into_response(),
    };
    match state.registry.attach_doctor(&id) {
        Ok(link) => {
            tracing::info!(session = %id, "doctor attached");
            upgrade.on_upgrade(move |socket| run_doctor(socket, link, state))
        }
        Err(err) => {
            tracing::info!(session = %id, %err, "doctor rejected");
            negative_reply(err)
        }
    }
}

fn close(code: u16, reason: &str) -> Message {
    Message::Close(Some(CloseFrame {
        code,
        reason: reason.into(),
    }))
}

struct Heartbeat {
    ticker: tokio::time::Interval,
    outstanding: u32,
    max_missed: u32,
}

impl Heartbeat {
    fn new(config: &RelayConfig) -> Self {
        let mut ticker = interval_at(Instant::now() + config.ping_interval, config.ping_interval);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        Heartbeat {
            ticker,
            outstanding: 0,
            max_missed: config.max_missed_pongs,
        }
    }

    /// `false` once the peer has missed too many pings.
    fn on_tick(&mut self) -> bool {
        if self.outstanding >= self.max_missed {
            return false;
        }
        self.outstanding += 1;
        true
    }

    fn on_pong(&mut self) {
        self.outstanding = 0;
    }
}

async fn shutdown_requested(mut rx: watch::Receiver<bool>) {
    let _ = rx.wait_for(|s| *s).await;
}

async fn run_patient(mut socket: WebSocket, link: PatientLink, state: AppState) {
    let mut heartbeat = Heartbeat::new(&state.config);
    let shutdown = shutdown_requested(state.shutdown.clone());
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    link.forward(text);
                }
                Some(Ok(Message::Pong(_))) => heartbeat.on_pong(),
                Some(Ok(Message::Ping(_))) | Some(Ok(Message::Binary(_))) => {}
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
            _ = heartbeat.ticker.tick() => {
                if !heartbeat.on_tick() {
                    tracing::warn!(session = %link.id(), "patient missed heartbeats");
                    let _ = socket.send(close(CLOSE_HEARTBEAT_TIMEOUT, "heartbeat timeout")).await;
                    break;
                }
                if socket.send(Message::Ping(Default::default())).await.is_err() {
                    break;
                }
            }
            _ = &mut shutdown => {
                let _ = socket.send(close(CLOSE_RELAY_SHUTDOWN, "relay shutting down")).await;
                break;
            }
        }
    }
    tracing::info!(session = %link.id(), stats = ?link.stats(), "patient disconnected");
}

async fn run_doctor(mut socket: WebSocket, mut link: DoctorLink, state: AppState) {
    let mut heartbeat = Heartbeat::new(&state.config);
    let shutdown = shutdown_requested(state.shutdown.clone());
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            frame = link.recv() => match frame {
                Some(frame) => {
                    if socket.send(Message::Text(frame)).await.is_err() {
                        break;
                    }
                }
                None => {
                    let _ = socket.send(close(CLOSE_PATIENT_GONE, REASON_PATIENT_GONE)).await;
                    break;
                }
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Pong(_))) => heartbeat.on_pong(),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            _ = heartbeat.ticker.tick() => {
                if !heartbeat.on_tick() {
                    tracing::warn!(session = %link.id(), "doctor missed heartbeats");
                    let _ = socket.send(close(CLOSE_HEARTBEAT_TIMEOUT, "heartbeat timeout")).await;
                    break;
                }
                if socket.send(Message::Ping(Default::default())).await.is_err() {
                    break;
                }
            }
            _ = &mut shutdown => {
                let _ = socket.send(close(CLOSE_RELAY_SHUTDOWN, "relay shutting down")).await;
                break;
            }
        }
    }
    tracing::info!(session = %link.id(), "doctor detached");
}
