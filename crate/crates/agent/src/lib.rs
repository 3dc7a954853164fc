//! Patient-side agent: reads the acquisition board's serial lines, keeps
//! one channel and streams it to the relay as `{"t":…,"v":…}` frames.
//!
//! The serial reader and the uplink writer run concurrently and share only
//! a bounded [`queue::DropOldestQueue`]. When the relay is away the agent
//! keeps reading, retries with exponential backoff and resumes with live
//! samples rather than replaying old ones.

pub mod agent;
pub mod lines;
pub mod queue;
pub mod source;
pub mod uplink;

pub use agent::{
    run_agent, run_pipeline, AgentConfig, AgentCounters, AgentError, AgentStats, Backoff, PipelineOptions,
    DEFAULT_QUEUE_CAPACITY,
};
pub use source::SerialSource;
pub use uplink::{ConnectError, Connector, LinkLost, Uplink, WsConnector};
