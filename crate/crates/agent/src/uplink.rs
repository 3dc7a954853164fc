//! Where decoded messages go: a connection factory and the connection it
//! yields. The WebSocket binding talks to the relay's `/in/<id>` route;
//! tests and the in-process latency harness plug in their own.

use std::future::Future;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::http::{StatusCode, Uri};
use tokio_tungstenite::tungstenite::{Error as WsError, Message};
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use ekg_core::session::SessionId;

#[derive(Debug, Error)]
pub enum ConnectError {
    /// Another patient already streams under this id.
    #[error("session id already in use")]
    DuplicateSession,
    #[error("relay unreachable: {0}")]
    Unreachable(String),
}

#[derive(Debug, Error)]
#[error("uplink lost: {0}")]
pub struct LinkLost(pub String);

/// An open connection carrying one text frame per message.
pub trait Uplink: Send {
    fn send(&mut self, frame: String) -> impl Future<Output = Result<(), LinkLost>> + Send;

    /// Resolves when the remote side goes away. Must be cancel safe.
    fn closed(&mut self) -> impl Future<Output = LinkLost> + Send;
}

pub trait Connector: Send + Sync {
    type Link: Uplink;

    fn connect(&self) -> impl Future<Output = Result<Self::Link, ConnectError>> + Send;
}

#[derive(Debug, Error)]
#[error("invalid relay url {url:?}: {reason}")]
pub struct InvalidRelayUrl {
    pub url: String,
    pub reason: &'static str,
}

/// Connects to `<relay>/in/<id>` over a plain WebSocket.
#[derive(Debug, Clone)]
pub struct WsConnector {
    url: String,
    connect_timeout: Duration,
}

impl WsConnector {
    /// `relay` may use `http://` or `ws://`; the patient route is appended.
    pub fn new(relay: &str, id: &SessionId) -> Result<Self, InvalidRelayUrl> {
        let invalid = |reason| InvalidRelayUrl {
            url: relay.to_owned(),
            reason,
        };
        let base = relay.trim_end_matches('/');
        let rest = if let Some(rest) = base.strip_prefix("http://") {
            rest
        } else if let Some(rest) = base.strip_prefix("ws://") {
            rest
        } else if base.starts_with("https://") || base.starts_with("wss://") {
            return Err(invalid("TLS is not supported"));
        } else {
            return Err(invalid("expected an http:// or ws:// URL"));
        };
        let url = format!("ws://{rest}/in/{id}");
        let uri: Uri = url.parse().map_err(|_| invalid("malformed URL"))?;
        if uri.host().is_none_or(str::is_empty) {
            return Err(invalid("missing host"));
        }
        Ok(WsConnector {
            url,
            connect_timeout: Duration::from_secs(5),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Connector for WsConnector {
    type Link = WsLink;

    async fn connect(&self) -> Result<WsLink, ConnectError> {
        let attempt = tokio::time::timeout(self.connect_timeout, connect_async(self.url.as_str()));
        match attempt.await {
            Err(_) => Err(ConnectError::Unreachable("connect timed out".into())),
            Ok(Ok((ws, _))) => Ok(WsLink { ws }),
            Ok(Err(WsError::Http(resp))) if resp.status() == StatusCode::CONFLICT => {
                Err(ConnectError::DuplicateSession)
            }
            Ok(Err(WsError::Http(resp))) => Err(ConnectError::Unreachable(format!("relay answered {}", resp.status()))),
            Ok(Err(e)) => Err(ConnectError::Unreachable(e.to_string())),
        }
    }
}

pub struct WsLink {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Uplink for WsLink {
    async fn send(&mut self, frame: String) -> Result<(), LinkLost> {
        self.ws
            .send(Message::text(frame))
            .await
            .map_err(|e| LinkLost(e.to_string()))
    }

    async fn closed(&mut self) -> LinkLost {
        // Reading also lets the socket answer the relay's pings.
        loop {
            match self.ws.next().await {
                Some(Ok(Message::Close(frame))) => {
                    return LinkLost(match frame {
                        Some(f) => format!("relay closed ({}: {})", u16::from(f.code), f.reason),
                        None => "relay closed".into(),
                    })
                }
                Some(Ok(_)) => {}
                Some(Err(e)) => return LinkLost(e.to_string()),
                None => return LinkLost("connection ended".into()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id() -> SessionId {
        "dev-1".parse().unwrap()
    }

    #[test]
    fn builds_patient_route() {
        let c = WsConnector::new("http://relay.example:8080/", &id()).unwrap();
        assert_eq!(c.url(), "ws://relay.example:8080/in/dev-1");
        let c = WsConnector::new("ws://127.0.0.1:9", &id()).unwrap();
        assert_eq!(c.url(), "ws://127.0.0.1:9/in/dev-1");
    }

    #[test]
    fn rejects_unusable_urls() {
        for bad in ["https://x", "wss://x", "ftp://x", "x:80", "http://"] {
            assert!(WsConnector::new(bad, &id()).is_err(), "{bad}");
        }
    }
}
