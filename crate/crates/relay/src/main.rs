use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use ekg_relay::{RegistryConfig, RelayConfig, RelayServer};
use tracing_subscriber::EnvFilter;

/// Pairs patient EKG streams with doctor viewers over WebSockets.
#[derive(Debug, Parser)]
#[command(name = "relay", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "LISTEN", default_value = "0.0.0.0:8080")]
    listen: SocketAddr,

    /// Maximum number of concurrent sessions.
    #[arg(long, env = "MAX_SESSIONS", default_value_t = 64)]
    max_sessions: usize,

    /// Log filter, e.g. `info` or `ekg_relay=debug`.
    #[arg(long, env = "LOG_LEVEL", default_value = "info")]
    log_level: String,

    /// Seconds between WebSocket pings.
    #[arg(long, env = "PING_INTERVAL", default_value_t = 20)]
    ping_interval: u64,

    /// HTML served to doctors; `{{SESSION_ID}}` is replaced with the id.
    #[arg(long, env = "VIEWER_PAGE")]
    viewer_page: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&args.log_level).context("invalid --log-level")?)
        .init();

    let viewer_page = match &args.viewer_page {
        Some(path) => {
            Some(std::fs::read_to_string(path).with_context(|| format!("reading viewer page {}", path.display()))?)
        }
        None => None,
    };
    let config = RelayConfig {
        registry: RegistryConfig {
            max_sessions: args.max_sessions,
            ..RegistryConfig::default()
        },
        ping_interval: Duration::from_secs(args.ping_interval.max(1)),
        viewer_page,
        ..RelayConfig::default()
    };

    let server = RelayServer::bind(args.listen, config)
        .await
        .with_context(|| format!("binding {}", args.listen))?;
    tracing::info!(addr = %server.local_addr(), "relay listening");

    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    server.stop().await?;
    Ok(())
}
