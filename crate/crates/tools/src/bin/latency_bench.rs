use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use ekg_tools::args::Topology;
use ekg_tools::bench::{run_latency_bench, BenchOutcome};

/// Measures production-to-delivery latency through the whole chain.
#[derive(Debug, Parser)]
#[command(name = "latency-bench", version)]
struct Args {
    /// Seconds of acquisition to stream.
    #[arg(long)]
    duration: f64,

    /// `inproc`, `localhost` or `url:<relay>`.
    #[arg(long, default_value = "localhost")]
    topology: Topology,

    /// Report file: one JSON record per line, then a summary line.
    #[arg(long, default_value = "latency-report.jsonl")]
    report: PathBuf,
}

fn write_report(path: &PathBuf, outcome: &BenchOutcome) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in &outcome.records {
        serde_json::to_writer(&mut out, record)?;
        writeln!(out)?;
    }
    let summary = serde_json::json!({
        "summary": {
            "topology": outcome.topology.to_string(),
            "report": outcome.report,
            "produced": outcome.produced(),
            "delivered": outcome.delivered(),
            "dropped": outcome.dropped(),
            "overruns": outcome.emulator.overruns,
        }
    });
    serde_json::to_writer(&mut out, &summary)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    if !(args.duration.is_finite() && args.duration >= 0.0) {
        anyhow::bail!("--duration must be a non-negative number of seconds");
    }
    let outcome = run_latency_bench(args.duration, args.topology.clone())
        .await
        .context("latency bench failed")?;
    write_report(&args.report, &outcome).with_context(|| format!("writing {}", args.report.display()))?;

    println!("topology   {}", outcome.topology);
    println!("produced   {}", outcome.produced());
    println!("delivered  {}", outcome.delivered());
    println!("dropped    {}", outcome.dropped());
    match outcome.report {
        Some(r) => {
            println!(
                "latency ms  min {}  p50 {}  p95 {}  p99 {}  max {}",
                r.min, r.p50, r.p95, r.p99, r.max
            );
        }
        None => println!("latency ms  n = 0, nothing was delivered"),
    }
    if let Err(e) = outcome.conservation() {
        println!("conservation: FAILED ({e})");
    }
    println!("report     {}", args.report.display());
    if outcome.report.is_none() {
        std::process::exit(1);
    }
    Ok(())
}
