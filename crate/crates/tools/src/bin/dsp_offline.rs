use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use ekg_tools::offline::{process_capture, write_csv};

/// Filters a captured message stream, detects R peaks and writes
/// `t_ms,filtered,is_peak,hr` rows.
#[derive(Debug, Parser)]
#[command(name = "dsp-offline", version)]
struct Args {
    /// Capture file: one `{"t":…,"v":…}` object per line.
    #[arg(long = "in")]
    input: PathBuf,

    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let trace = process_capture(&text)?;
    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_csv(&trace, BufWriter::new(out))?;
    let hr = trace
        .peaks
        .last()
        .and_then(|p| p.heart_rate_bpm)
        .map_or("n/a".to_owned(), |hr| format!("{hr:.1} bpm"));
    eprintln!(
        "dsp-offline: {} points, {} peaks, last heart rate {hr}",
        trace.points.len(),
        trace.peaks.len()
    );
    Ok(())
}
