//! End-to-end latency harness: emulator → serial link → patient agent →
//! relay → headless doctor, all stamped from one clock.
//!
//! The emulator stamps each sample when its main loop drains it; the doctor
//! stamps each frame when it arrives. Nothing is produced until the doctor
//! is attached, so every emitted sample is either delivered or accounted
//! for by a drop counter somewhere along the chain.

use std::io::Write;
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use ekg_agent::{
    run_pipeline, AgentCounters, AgentError, AgentStats, ConnectError, Connector, LinkLost, PipelineOptions,
    SerialSource, Uplink, WsConnector,
};
use ekg_core::clock::{Clock, MonotonicClock};
use ekg_core::device::{run_emulator, EmulatorError, EmulatorOptions, EmulatorReport};
use ekg_core::latency::{LatencyRecord, LatencyReport};
use ekg_core::session::SessionId;
use ekg_core::signal::SignalSpec;
use ekg_core::EkgMessage;
use ekg_relay::{Frame, PatientLink, Registry, RegistryConfig, RelayConfig, RelayError, RelayServer, SessionStats};
use futures_util::StreamExt;
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio::time::{sleep, timeout, Instant};
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;
use tokio_util::io::SyncIoBridge;

pub use crate::args::Topology;

/// How long the chain may take to drain after the emulator stops.
const DRAIN_TIMEOUT: Duration = Duration::from_secs(15);
const SETUP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("topology unreachable: {0}")]
    TopologyUnreachable(String),
    #[error(transparent)]
    Emulator(#[from] EmulatorError),
    #[error("patient agent failed: {0}")]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Stalled(&'static str),
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub topology: Topology,
    pub records: Vec<LatencyRecord>,
    pub report: Option<LatencyReport>,
    pub emulator: EmulatorReport,
    pub agent: AgentCounters,
    /// Relay counters for the session, when the relay runs in this process.
    pub relay: Option<SessionStats>,
}

impl BenchOutcome {
    /// Data lines emitted by the emulator.
    pub fn produced(&self) -> u64 {
        self.emulator.lines_emitted
    }

    pub fn delivered(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn dropped(&self) -> u64 {
        self.produced().saturating_sub(self.delivered())
    }

    /// Checks that every sample the emulator produced is either delivered
    /// or counted as dropped by the agent or the relay.
    pub fn conservation(&self) -> Result<(), String> {
        if self.delivered() > self.produced() {
            return Err(format!(
                "delivered {} frames but only {} were produced",
                self.delivered(),
                self.produced()
            ));
        }
        if self.agent.lines_ok != self.produced() {
            return Err(format!(
                "agent decoded {} lines, emulator wrote {}",
                self.agent.lines_ok,
                self.produced()
            ));
        }
        let Some(relay) = self.relay else {
            return Ok(());
        };
        if relay.frames_in != self.agent.messages_sent {
            return Err(format!(
                "relay received {} frames, agent sent {}",
                relay.frames_in, self.agent.messages_sent
            ));
        }
        if !relay.is_balanced() {
            return Err(format!("relay counters do not balance: {relay:?}"));
        }
        let accounted = self.delivered()
            + self.agent.messages_dropped
            + relay.frames_dropped_unpaired
            + relay.frames_dropped_backpressure
            + relay.frames_in_flight_at_teardown;
        if accounted != self.produced() {
            return Err(format!(
                "produced {} but delivered + counted drops = {accounted}",
                self.produced()
            ));
        }
        Ok(())
    }
}

/// Sends agent frames straight into an in-process registry.
pub struct RegistryConnector {
    registry: Arc<Registry>,
    id: SessionId,
}

impl RegistryConnector {
    pub fn new(registry: Arc<Registry>, id: SessionId) -> Self {
        RegistryConnector { registry, id }
    }
}

pub struct RegistryUplink(PatientLink);

impl Connector for RegistryConnector {
    type Link = RegistryUplink;

    async fn connect(&self) -> Result<RegistryUplink, ConnectError> {
        match self.registry.connect_patient(&self.id) {
            Ok(link) => Ok(RegistryUplink(link)),
            Err(RelayError::DuplicateSession) => Err(ConnectError::DuplicateSession),
            Err(e) => Err(ConnectError::Unreachable(e.to_string())),
        }
    }
}

impl Uplink for RegistryUplink {
    async fn send(&mut self, frame: String) -> Result<(), LinkLost> {
        self.0.forward(Frame::from(frame));
        Ok(())
    }

    async fn closed(&mut self) -> LinkLost {
        std::future::pending().await
    }
}

/// Runs the full chain for `duration_s` seconds of emulated acquisition.
pub async fn run_latency_bench(duration_s: f64, topology: Topology) -> Result<BenchOutcome, BenchError> {
    let clock = MonotonicClock::new();
    let id: SessionId = format!("bench-{}-{}", std::process::id(), clock.now_ms())
        .parse()
        .expect("generated id is valid");
    let stats = Arc::new(AgentStats::default());
    let (go_tx, go_rx) = oneshot::channel::<()>();

    let (registry, server, records, emulator, agent) = match &topology {
        Topology::InProc => {
            let registry = Registry::new(RegistryConfig::default());
            let (device, serial) = tokio::io::duplex(64 * 1024);
            let emulator = spawn_emulator(SyncIoBridge::new(device), duration_s, clock, go_rx);
            let agent = tokio::spawn(run_pipeline(
                serial,
                RegistryConnector::new(Arc::clone(&registry), id.clone()),
                PipelineOptions::default(),
                Arc::clone(&stats),
            ));
            wait_for_patient(&registry, &id).await?;
            let mut doctor = registry
                .attach_doctor(&id)
                .map_err(|e| BenchError::TopologyUnreachable(e.to_string()))?;
            let records = tokio::spawn(async move {
                let mut records = Vec::new();
                while let Some(frame) = doctor.recv().await {
                    record(&mut records, frame.as_str(), &clock);
                }
                records
            });
            (Some(registry), None, records, emulator, agent)
        }
        Topology::Localhost => {
            let server = RelayServer::bind("127.0.0.1:0", RelayConfig::default())
                .await
                .map_err(|e| BenchError::TopologyUnreachable(e.to_string()))?;
            let listener =
                TcpListener::bind("127.0.0.1:0").map_err(|e| BenchError::TopologyUnreachable(e.to_string()))?;
            let serial_addr = listener.local_addr().expect("bound listener");
            let emulator = spawn_tcp_emulator(listener, duration_s, clock, go_rx);
            let serial = SerialSource::Tcp(serial_addr.to_string())
                .open()
                .await
                .map_err(|e| BenchError::TopologyUnreachable(e.to_string()))?;
            let connector = WsConnector::new(&server.base_url(), &id).map_err(AgentError::from)?;
            let agent = tokio::spawn(run_pipeline(
                serial,
                connector,
                PipelineOptions::default(),
                Arc::clone(&stats),
            ));
            let registry = Arc::clone(server.registry());
            wait_for_patient(&registry, &id).await?;
            let records = spawn_ws_doctor(&server.base_url(), &id, clock).await?;
            (Some(registry), Some(server), records, emulator, agent)
        }
        Topology::Remote(url) => {
            let connector = WsConnector::new(url, &id).map_err(AgentError::from)?;
            let (device, serial) = tokio::io::duplex(64 * 1024);
            let emulator = spawn_emulator(SyncIoBridge::new(device), duration_s, clock, go_rx);
            let agent = tokio::spawn(run_pipeline(
                serial,
                connector,
                PipelineOptions::default(),
                Arc::clone(&stats),
            ));
            let records = spawn_ws_doctor(url, &id, clock).await?;
            (None, None, records, emulator, agent)
        }
    };

    let _ = go_tx.send(());
    let emulator = emulator
        .await
        .map_err(|_| BenchError::Stalled("emulator thread panicked"))??;

    // The emulator closed the serial link; the agent drains and stops, the
    // relay then closes the doctor.
    match timeout(DRAIN_TIMEOUT, agent).await {
        Ok(Ok(Err(AgentError::SerialSourceLost(_)))) => {}
        Ok(Ok(Err(e))) => return Err(e.into()),
        Ok(Ok(Ok(never))) => match never {},
        Ok(Err(_)) => return Err(BenchError::Stalled("agent task panicked")),
        Err(_) => return Err(BenchError::Stalled("agent did not finish after the emulator stopped")),
    }
    let records = timeout(DRAIN_TIMEOUT, records)
        .await
        .map_err(|_| BenchError::Stalled("doctor did not see the session end"))?
        .map_err(|_| BenchError::Stalled("doctor task panicked"))?;

    let relay = match &registry {
        Some(registry) => Some(final_stats(registry, &id).await?),
        None => None,
    };
    if let Some(server) = server {
        let _ = server.stop().await;
    }

    let agent = stats.snapshot();
    let produced = emulator.lines_emitted;
    let report = LatencyReport::from_records(&records, produced.saturating_sub(records.len() as u64));
    Ok(BenchOutcome {
        topology,
        records,
        report,
        emulator,
        agent,
        relay,
    })
}

fn record(records: &mut Vec<LatencyRecord>, frame: &str, clock: &MonotonicClock) {
    let now = clock.now_ms();
    if let Ok(msg) = EkgMessage::from_json(frame) {
        records.push(LatencyRecord::new(msg.t_ms, now));
    }
}

fn spawn_emulator<W: Write + Send + 'static>(
    mut sink: W,
    duration_s: f64,
    clock: MonotonicClock,
    go: oneshot::Receiver<()>,
) -> JoinHandle<Result<EmulatorReport, EmulatorError>> {
    tokio::task::spawn_blocking(move || {
        if go.blocking_recv().is_err() {
            return Ok(EmulatorReport::default());
        }
        let report = run_emulator(
            &SignalSpec::default(),
            &mut sink,
            duration_s,
            &clock,
            &EmulatorOptions::default(),
        );
        // Dropping the sink closes the serial link.
        drop(sink);
        report
    })
}

fn spawn_tcp_emulator(
    listener: TcpListener,
    duration_s: f64,
    clock: MonotonicClock,
    go: oneshot::Receiver<()>,
) -> JoinHandle<Result<EmulatorReport, EmulatorError>> {
    tokio::task::spawn_blocking(move || {
        let (stream, _) = listener.accept().map_err(EmulatorError::SinkFailure)?;
        stream.set_nodelay(true).map_err(EmulatorError::SinkFailure)?;
        if go.blocking_recv().is_err() {
            return Ok(EmulatorReport::default());
        }
        let mut sink = stream;
        run_emulator(
            &SignalSpec::default(),
            &mut sink,
            duration_s,
            &clock,
            &EmulatorOptions::default(),
        )
    })
}

async fn wait_for_patient(registry: &Registry, id: &SessionId) -> Result<(), BenchError> {
    let deadline = Instant::now() + SETUP_TIMEOUT;
    while registry.check_doctor(id).is_err() {
        if Instant::now() > deadline {
            return Err(BenchError::TopologyUnreachable("patient agent never connected".into()));
        }
        sleep(Duration::from_millis(5)).await;
    }
    Ok(())
}

/// Connects a headless doctor, retrying while the patient is not there yet.
async fn spawn_ws_doctor(
    relay: &str,
    id: &SessionId,
    clock: MonotonicClock,
) -> Result<JoinHandle<Vec<LatencyRecord>>, BenchError> {
    let base = relay.trim_end_matches('/');
    let base = base
        .strip_prefix("http://")
        .or_else(|| base.strip_prefix("ws://"))
        .ok_or_else(|| BenchError::TopologyUnreachable(format!("unsupported relay url {relay}")))?;
    let url = format!("ws://{base}/out/{id}");
    let deadline = Instant::now() + SETUP_TIMEOUT;
    let mut ws = loop {
        match connect_async(url.as_str()).await {
            Ok((ws, _)) => break ws,
            Err(e) if Instant::now() > deadline => {
                return Err(BenchError::TopologyUnreachable(format!("doctor could not attach: {e}")))
            }
            Err(_) => sleep(Duration::from_millis(20)).await,
        }
    };
    Ok(tokio::spawn(async move {
        let mut records = Vec::new();
        while let Some(Ok(msg)) = ws.next().await {
            match msg {
                Message::Text(text) => record(&mut records, text.as_str(), &clock),
                Message::Close(_) => break,
                _ => {}
            }
        }
        records
    }))
}

/// Counters of the finished session; teardown completes shortly after the
/// doctor sees the close.
async fn final_stats(registry: &Registry, id: &SessionId) -> Result<SessionStats, BenchError> {
    let deadline = Instant::now() + SETUP_TIMEOUT;
    loop {
        if let Some((_, stats)) = registry.finished_sessions().into_iter().rev().find(|(s, _)| s == id) {
            return Ok(stats);
        }
        if Instant::now() > deadline {
            return Err(BenchError::Stalled("relay session never finished"));
        }
        sleep(Duration::from_millis(5)).await;
    }
}
