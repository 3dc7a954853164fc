//! Parsers for the command-line forms shared by the tools.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use ekg_core::device::Stall;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid {what} {value:?}: expected {expected}")]
pub struct ArgError {
    what: &'static str,
    value: String,
    expected: &'static str,
}

impl ArgError {
    fn new(what: &'static str, value: &str, expected: &'static str) -> Self {
        ArgError {
            what,
            value: value.to_owned(),
            expected,
        }
    }
}

/// `<ms>@<s>`: pause the emulator's main loop for `ms` milliseconds starting
/// `s` seconds into the run.
pub fn parse_stall(s: &str) -> Result<Stall, ArgError> {
    let err = || ArgError::new("stall", s, "<ms>@<seconds>, e.g. 100@2.5");
    let (ms, at) = s.split_once('@').ok_or_else(err)?;
    let ms: u64 = ms.trim().parse().map_err(|_| err())?;
    let at: f64 = at.trim().parse().map_err(|_| err())?;
    if !at.is_finite() || at < 0.0 {
        return Err(err());
    }
    Ok(Stall {
        at: Duration::from_secs_f64(at),
        length: Duration::from_millis(ms),
    })
}

/// Where the emulator writes its serial stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkTarget {
    /// Listen on `host:port` and serve the first client that connects.
    Tcp(String),
    Stdout,
}

impl FromStr for SinkTarget {
    type Err = ArgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "stdout" {
            return Ok(SinkTarget::Stdout);
        }
        match s.strip_prefix("tcp:") {
            Some(addr) if addr.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok()) => {
                Ok(SinkTarget::Tcp(addr.to_owned()))
            }
            _ => Err(ArgError::new("sink", s, "tcp:<host:port> or stdout")),
        }
    }
}

/// How the latency bench wires the pipeline together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    /// Everything in this process, no sockets.
    InProc,
    /// A relay started on the loopback interface; every hop uses TCP.
    Localhost,
    /// An already running relay at this base URL.
    Remote(String),
}

impl FromStr for Topology {
    type Err = ArgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(Topology::InProc),
            "localhost" => Ok(Topology::Localhost),
            _ => match s.strip_prefix("url:") {
                Some(url) if !url.is_empty() => Ok(Topology::Remote(url.to_owned())),
                _ => Err(ArgError::new("topology", s, "inproc, localhost or url:<relay>")),
            },
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::InProc => f.write_str("inproc"),
            Topology::Localhost => f.write_str("localhost"),
            Topology::Remote(url) => write!(f, "url:{url}"),
        }
    }
}
