//! Offline processing of a message capture into a CSV of filtered points.

use std::io::{self, Write};

use ekg_core::dsp::{process_messages, PeakDetectorConfig, ProcessedTrace};
use ekg_core::message::{parse_capture, MessageError};
use thiserror::Error;

pub const CSV_HEADER: &str = "t_ms,filtered,is_peak,hr";

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error("capture line {line}: {source}")]
    Capture { line: usize, source: MessageError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Runs the doctor-side pipeline over a capture (one JSON message per line).
pub fn process_capture(text: &str) -> Result<ProcessedTrace, OfflineError> {
    let messages = parse_capture(text).map_err(|(line, source)| OfflineError::Capture { line, source })?;
    Ok(process_messages(&messages, &PeakDetectorConfig::default()))
}

/// One row per filtered point; `hr` is empty until a rate is known.
pub fn write_csv<W: Write>(trace: &ProcessedTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in &trace.points {
        write!(out, "{},{},{},", p.t_ms, p.filtered_value, u8::from(p.is_r_peak))?;
        match p.heart_rate_bpm {
            Some(hr) => writeln!(out, "{hr}")?,
            None => writeln!(out)?,
        }
    }
    out.flush()
}
