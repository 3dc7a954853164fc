use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use ekg_agent::{run_agent, AgentConfig, AgentStats, PipelineOptions, SerialSource};
use ekg_core::session::SessionId;
use tracing_subscriber::EnvFilter;

/// Forwards one EKG channel from the device's serial stream to the relay.
#[derive(Debug, Parser)]
#[command(name = "patient-agent", version)]
struct Args {
    /// `tcp:<host:port>` of a device emulator, or `stdin`.
    #[arg(long)]
    serial: SerialSource,

    /// Relay base URL, e.g. `http://localhost:8080`.
    #[arg(long)]
    relay: String,

    /// Session id shared with the doctor.
    #[arg(long)]
    id: SessionId,

    /// Channel to forward.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..6))]
    channel: u8,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let config = AgentConfig {
        serial_source: args.serial,
        relay_url: args.relay,
        session_id: args.id,
        options: PipelineOptions {
            channel_index: usize::from(args.channel),
            ..PipelineOptions::default()
        },
    };
    let stats = Arc::new(AgentStats::default());
    let outcome = tokio::select! {
        result = run_agent(config, Arc::clone(&stats)) => Some(result),
        _ = tokio::signal::ctrl_c() => None,
    };
    tracing::info!(stats = ?stats.snapshot(), "agent stopped");
    match outcome {
        None => Ok(()),
        Some(Ok(never)) => match never {},
        Some(Err(e)) => Err(e).context("patient agent failed"),
    }
}
