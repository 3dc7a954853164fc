//! WebSocket relay pairing one patient stream with at most one doctor per
//! session id.
//!
//! [`registry`] holds the session state machine and does not know about
//! sockets; [`server`] exposes it over HTTP and WebSockets.

pub mod page;
pub mod registry;
pub mod server;

pub use registry::{
    DoctorLink, Forwarded, Frame, PatientLink, Registry, RegistryConfig, RelayError, SessionId, SessionState,
    SessionStats,
};
pub use server::{RelayConfig, RelayServer};
