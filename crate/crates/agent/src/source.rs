use std::fmt;
use std::pin::Pin;
use std::str::FromStr;

use thiserror::Error;
use tokio::io::{self, AsyncRead};
use tokio::net::TcpStream;

/// Where the agent reads the device's serial stream from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SerialSource {
    /// Connect to a device emulator listening on `host:port`.
    Tcp(String),
    Stdin,
}

#[derive(Debug, Error)]
#[error("invalid serial source {0:?}: expected tcp:<host:port> or stdin")]
pub struct InvalidSerialSource(pub String);

impl FromStr for SerialSource {
    type Err = InvalidSerialSource;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "stdin" {
            return Ok(SerialSource::Stdin);
        }
        match s.strip_prefix("tcp:") {
            Some(addr)
                if addr
                    .rsplit_once(':')
                    .is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) =>
            {
                Ok(SerialSource::Tcp(addr.to_owned()))
            }
            _ => Err(InvalidSerialSource(s.to_owned())),
        }
    }
}

impl fmt::Display for SerialSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SerialSource::Tcp(addr) => write!(f, "tcp:{addr}"),
            SerialSource::Stdin => f.write_str("stdin"),
        }
    }
}

pub type SerialStream = Pin<Box<dyn AsyncRead + Send>>;

impl SerialSource {
    pub async fn open(&self) -> io::Result<SerialStream> {
        Ok(match self {
            SerialSource::Tcp(addr) => {
                let stream = TcpStream::connect(addr.as_str()).await?;
                stream.set_nodelay(true)?;
                Box::pin(stream)
            }
            SerialSource::Stdin => Box::pin(io::stdin()),
        })
    }
}
