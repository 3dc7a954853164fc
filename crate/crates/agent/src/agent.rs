use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tokio::io::{AsyncRead, BufReader};
use tokio::task::JoinHandle;

use ekg_core::message::encode_message;
use ekg_core::session::SessionId;
use ekg_core::{decode_serial, EkgMessage, SerialLine, CHANNEL_COUNT};

use crate::lines::{LineReader, RawLine};
use crate::queue::DropOldestQueue;
use crate::source::SerialSource;
use crate::uplink::{ConnectError, Connector, InvalidRelayUrl, Uplink, WsConnector};

/// Five seconds of samples at 250 Hz.
pub const DEFAULT_QUEUE_CAPACITY: usize = 1250;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("serial source lost: {0}")]
    SerialSourceLost(String),
    #[error("relay refused the session id: another patient is already streaming on it")]
    DuplicateSession,
    #[error(transparent)]
    InvalidRelayUrl(#[from] InvalidRelayUrl),
    #[error("channel index {0} out of range 0..{CHANNEL_COUNT}")]
    InvalidChannel(usize),
}

/// Reconnection schedule: `initial`, then multiplied by `multiplier` after
/// every failed attempt, never above `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial: Duration,
    pub multiplier: f64,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            initial: Duration::from_millis(500),
            multiplier: 2.0,
            cap: Duration::from_secs(8),
        }
    }
}

impl Backoff {
    pub fn delays(self) -> impl Iterator<Item = Duration> {
        std::iter::successors(Some(self.initial.min(self.cap)), move |d| {
            Some(d.mul_f64(self.multiplier).min(self.cap))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub channel_index: usize,
    pub queue_capacity: usize,
    pub backoff: Backoff,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            channel_index: 0,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            backoff: Backoff::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub serial_source: SerialSource,
    pub relay_url: String,
    pub session_id: SessionId,
    pub options: PipelineOptions,
}

#[derive(Debug, Default)]
pub struct AgentStats {
    lines_ok: AtomicU64,
    lines_malformed: AtomicU64,
    overrun_markers: AtomicU64,
    messages_sent: AtomicU64,
    messages_dropped: AtomicU64,
    reconnects: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentCounters {
    pub lines_ok: u64,
    pub lines_malformed: u64,
    pub overrun_markers: u64,
    pub messages_sent: u64,
    /// Decoded messages never sent: evicted from the full queue or
    /// discarded as stale after a reconnect.
    pub messages_dropped: u64,
    pub reconnects: u64,
}

impl AgentStats {
    pub fn snapshot(&self) -> AgentCounters {
        AgentCounters {
            lines_ok: self.lines_ok.load(Ordering::Relaxed),
            lines_malformed: self.lines_malformed.load(Ordering::Relaxed),
            overrun_markers: self.overrun_markers.load(Ordering::Relaxed),
            messages_sent: self.messages_sent.load(Ordering::Relaxed),
            messages_dropped: self.messages_dropped.load(Ordering::Relaxed),
            reconnects: self.reconnects.load(Ordering::Relaxed),
        }
    }

    fn bump(counter: &AtomicU64, n: u64) {
        counter.fetch_add(n, Ordering::Relaxed);
    }
}

/// Opens the serial source and streams to the relay over a WebSocket until
/// a fatal error. Stop it by dropping the future.
pub async fn run_agent(config: AgentConfig, stats: Arc<AgentStats>) -> Result<Infallible, AgentError> {
    let connector = WsConnector::new(&config.relay_url, &config.session_id)?;
    let serial = config
        .serial_source
        .open()
        .await
        .map_err(|e| AgentError::SerialSourceLost(format!("{}: {e}", config.serial_source)))?;
    run_pipeline(serial, connector, config.options, stats).await
}

/// Reads serial lines from `serial` and forwards the selected channel
/// through connections obtained from `connector`.
///
/// Returns when the serial stream ends, after sending whatever is queued
/// if a connection is up, or when the relay refuses the session id.
pub async fn run_pipeline<R, C>(
    serial: R,
    connector: C,
    options: PipelineOptions,
    stats: Arc<AgentStats>,
) -> Result<Infallible, AgentError>
where
    R: AsyncRead + Send + 'static,
    C: Connector,
{
    if options.channel_index >= CHANNEL_COUNT {
        return Err(AgentError::InvalidChannel(options.channel_index));
    }
    let queue = Arc::new(DropOldestQueue::new(options.queue_capacity));
    let mut reader = tokio::spawn(read_serial(
        serial,
        options.channel_index,
        Arc::clone(&queue),
        Arc::clone(&stats),
    ));
    let result = write_uplink(&connector, &queue, &mut reader, options.backoff, &stats).await;
    reader.abort();
    result
}

async fn read_serial<R: AsyncRead>(
    serial: R,
    channel: usize,
    queue: Arc<DropOldestQueue<EkgMessage>>,
    stats: Arc<AgentStats>,
) -> String {
    let serial = std::pin::pin!(serial);
    let mut lines = LineReader::new(BufReader::new(serial));
    let reason = loop {
        let line = match lines.next_line().await {
            Ok(Some(line)) => line,
            Ok(None) => break "end of stream".to_owned(),
            Err(e) => break e.to_string(),
        };
        let decoded = match line {
            RawLine::Line(bytes) => decode_serial(bytes).ok(),
            RawLine::Overlong | RawLine::Truncated => None,
        };
        match decoded {
            Some(SerialLine::Data(sample)) => {
                AgentStats::bump(&stats.lines_ok, 1);
                let msg = encode_message(&sample, channel).expect("channel index checked at start");
                if queue.push(msg) {
                    AgentStats::bump(&stats.messages_dropped, 1);
                }
            }
            Some(SerialLine::Overrun) => AgentStats::bump(&stats.overrun_markers, 1),
            None => AgentStats::bump(&stats.lines_malformed, 1),
        }
    };
    queue.close();
    reason
}

async fn source_lost(reader: &mut JoinHandle<String>) -> AgentError {
    match reader.await {
        Ok(reason) => AgentError::SerialSourceLost(reason),
        Err(e) => AgentError::SerialSourceLost(e.to_string()),
    }
}

async fn write_uplink<C: Connector>(
    connector: &C,
    queue: &DropOldestQueue<EkgMessage>,
    reader: &mut JoinHandle<String>,
    backoff: Backoff,
    stats: &AgentStats,
) -> Result<Infallible, AgentError> {
    let mut delays = backoff.delays();
    let mut delay = None;
    let mut was_connected = false;
    loop {
        if let Some(d) = delay.take() {
            tokio::time::sleep(d).await;
        }
        let mut link = match connector.connect().await {
            Ok(link) => link,
            Err(ConnectError::DuplicateSession) => return Err(AgentError::DuplicateSession),
            Err(ConnectError::Unreachable(reason)) => {
                if reader.is_finished() {
                    return Err(source_lost(reader).await);
                }
                tracing::warn!(%reason, "relay unreachable");
                delay = delays.next();
                continue;
            }
        };
        if was_connected {
            // Whatever piled up while disconnected is stale: resume live.
            AgentStats::bump(&stats.reconnects, 1);
            AgentStats::bump(&stats.messages_dropped, queue.clear() as u64);
            tracing::info!("reconnected to relay");
        } else {
            tracing::info!("connected to relay");
        }
        was_connected = true;
        delays = backoff.delays();

        loop {
            tokio::select! {
                next = queue.pop() => match next {
                    Some(msg) => match link.send(msg.to_json()).await {
                        Ok(()) => AgentStats::bump(&stats.messages_sent, 1),
                        Err(e) => {
                            AgentStats::bump(&stats.messages_dropped, 1);
                            tracing::warn!(%e, "relay connection lost");
                            break;
                        }
                    },
                    None => return Err(source_lost(reader).await),
                },
                lost = link.closed() => {
                    tracing::warn!(%lost, "relay connection lost");
                    break;
                }
            }
        }
        // Anything still queued would be discarded on reconnect anyway.
        if reader.is_finished() {
            return Err(source_lost(reader).await);
        }
        delay = delays.next();
    }
}
