use std::io::{self, Write};
use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use ekg_core::clock::SystemClock;
use ekg_core::device::{run_emulator, BaudLimiter, EmulatorOptions, Stall};
use ekg_core::serial::UART_BAUD;
use ekg_core::signal::SignalSpec;
use ekg_tools::args::{parse_stall, SinkTarget};

/// Emulates the acquisition board: samples a synthetic EKG at 250 Hz and
/// writes serial lines in real time.
#[derive(Debug, Parser)]
#[command(name = "devicesim", version)]
struct Args {
    /// Signal description (TOML); built-in defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,

    /// `stdout`, or `tcp:<host:port>` to listen and serve the first client.
    #[arg(long, default_value = "stdout")]
    sink: SinkTarget,

    /// Run length in seconds.
    #[arg(long)]
    duration: f64,

    /// Pace output to a 115200 baud UART.
    #[arg(long)]
    baud_limit: bool,

    /// Pause the main loop: `<ms>@<s>`. Repeatable.
    #[arg(long, value_parser = parse_stall)]
    stall: Vec<Stall>,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    if !(args.duration.is_finite() && args.duration >= 0.0) {
        anyhow::bail!("--duration must be a non-negative number of seconds");
    }
    let spec = match &args.spec {
        Some(path) => SignalSpec::from_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => SignalSpec::default(),
    };
    let options = EmulatorOptions {
        stalls: args.stall.clone(),
        ..EmulatorOptions::default()
    };

    let sink: Box<dyn Write> = match &args.sink {
        SinkTarget::Stdout => Box::new(io::stdout().lock()),
        SinkTarget::Tcp(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("listening on {addr}"))?;
            eprintln!("devicesim: waiting for a reader on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept()?;
            stream.set_nodelay(true)?;
            eprintln!("devicesim: streaming to {peer}");
            Box::new(stream)
        }
    };
    let mut sink: Box<dyn Write> = if args.baud_limit {
        Box::new(BaudLimiter::new(sink, UART_BAUD))
    } else {
        sink
    };

    let report = run_emulator(&spec, &mut sink, args.duration, &SystemClock, &options)?;
    eprintln!(
        "devicesim: ticks={} lines={} overruns={} bytes={}",
        report.ticks, report.lines_emitted, report.overruns, report.bytes_emitted
    );
    Ok(())
}
