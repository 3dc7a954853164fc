//! WebAssembly front for the demo page in `www/`.
//!
//! Three operations are exported:
//!
//! * [`analyze`] synthesizes a trace and runs the doctor-side filter and
//!   R-peak detector over it.
//! * [`encode_line`] renders one sample as the serial line and the relayed
//!   JSON message.
//! * [`explore_overruns`] runs the acquisition board in virtual time with a
//!   stalled main loop and reports what the serial stream carried.

use ekg_core::device::{run_virtual, EmulatorOptions, Stall};
use ekg_core::dsp::{process_messages, PeakDetectorConfig};
use ekg_core::message::encode_message;
use ekg_core::signal::{generate_signal, SignalSpec};
use ekg_core::{encode_serial, Channels, Sample, Timestamp, SAMPLE_PERIOD_MS, SAMPLE_RATE_HZ};
use std::time::Duration;
use wasm_bindgen::prelude::*;

/// Longest trace the page may request, in seconds.
pub const MAX_SECONDS: f64 = 120.0;

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Analysis {
    raw: Vec<u16>,
    filtered_t_ms: Vec<u32>,
    filtered: Vec<f64>,
    peaks_t_ms: Vec<u32>,
    truth_t_ms: Vec<u32>,
    heart_rate: Option<f64>,
}

#[wasm_bindgen]
impl Analysis {
    /// Channel 0 as sampled, one value per 4 ms.
    #[wasm_bindgen(getter)]
    pub fn raw(&self) -> Vec<u16> {
        self.raw.clone()
    }

    #[wasm_bindgen(getter, js_name = filteredTimes)]
    pub fn filtered_t_ms(&self) -> Vec<u32> {
        self.filtered_t_ms.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn filtered(&self) -> Vec<f64> {
        self.filtered.clone()
    }

    #[wasm_bindgen(getter, js_name = peakTimes)]
    pub fn peaks_t_ms(&self) -> Vec<u32> {
        self.peaks_t_ms.clone()
    }

    /// Beat instants the generator placed, for comparison.
    #[wasm_bindgen(getter, js_name = truthTimes)]
    pub fn truth_t_ms(&self) -> Vec<u32> {
        self.truth_t_ms.clone()
    }

    /// Last reported heart rate, NaN when none.
    #[wasm_bindgen(getter, js_name = heartRate)]
    pub fn heart_rate(&self) -> f64 {
        self.heart_rate.unwrap_or(f64::NAN)
    }
}

pub fn analyze_trace(
    bpm: f64,
    powerline_counts: f64,
    noise_rms: f64,
    seconds: f64,
    seed: u64,
) -> Result<Analysis, String> {
    if !(seconds.is_finite() && seconds > 0.0 && seconds <= MAX_SECONDS) {
        return Err(format!("duration must be in (0, {MAX_SECONDS}] seconds"));
    }
    let spec = SignalSpec {
        heart_rate_bpm: bpm,
        powerline_amplitude_counts: powerline_counts,
        noise_rms_counts: noise_rms,
        seed,
        ..SignalSpec::default()
    };
    let n = (seconds * SAMPLE_RATE_HZ as f64) as usize;
    let signal = generate_signal(&spec, n).map_err(|e| e.to_string())?;
    let messages: Vec<_> = signal
        .samples
        .iter()
        .map(|s| encode_message(s, 0).expect("channel 0 exists"))
        .collect();
    let trace = process_messages(&messages, &PeakDetectorConfig::default());
    Ok(Analysis {
        raw: messages.iter().map(|m| m.value).collect(),
        filtered_t_ms: trace.points.iter().map(|p| p.t_ms).collect(),
        filtered: trace.points.iter().map(|p| p.filtered_value).collect(),
        peaks_t_ms: trace.peaks.iter().map(|p| p.t_ms).collect(),
        truth_t_ms: signal.r_peaks.iter().map(|&i| i as u32 * SAMPLE_PERIOD_MS).collect(),
        heart_rate: trace.peaks.iter().rev().find_map(|p| p.heart_rate_bpm),
    })
}

#[wasm_bindgen]
pub fn analyze(bpm: f64, powerline_counts: f64, noise_rms: f64, seconds: f64, seed: u32) -> Result<Analysis, JsError> {
    analyze_trace(bpm, powerline_counts, noise_rms, seconds, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    serial: String,
    json: String,
}

#[wasm_bindgen]
impl EncodedSample {
    /// Serial line without its `\r\n` terminator.
    #[wasm_bindgen(getter)]
    pub fn serial(&self) -> String {
        self.serial.clone()
    }

    /// Bytes on the wire including the terminator.
    #[wasm_bindgen(getter, js_name = serialLength)]
    pub fn serial_length(&self) -> usize {
        self.serial.len() + 2
    }

    #[wasm_bindgen(getter)]
    pub fn json(&self) -> String {
        self.json.clone()
    }
}

pub fn encode_sample(time_ms: u32, values: &[u16], channel: usize) -> Result<EncodedSample, String> {
    let values: [u16; 6] = values
        .try_into()
        .map_err(|_| format!("expected 6 channel values, got {}", values.len()))?;
    let ts = Timestamp::from_millis(time_ms).map_err(|e| e.to_string())?;
    let sample = Sample::new(ts, Channels::new(values).map_err(|e| e.to_string())?);
    let mut line = encode_serial(&sample);
    line.truncate(line.len() - 2);
    let json = encode_message(&sample, channel).map_err(|e| e.to_string())?.to_json();
    Ok(EncodedSample {
        serial: String::from_utf8(line).expect("serial lines are ASCII"),
        json,
    })
}

#[wasm_bindgen]
pub fn encode_line(time_ms: u32, values: Vec<u16>, channel: usize) -> Result<EncodedSample, JsError> {
    encode_sample(time_ms, &values, channel).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverrunSummary {
    ticks: u64,
    lines: u64,
    overruns: u64,
    excerpt: String,
}

#[wasm_bindgen]
impl OverrunSummary {
    #[wasm_bindgen(getter)]
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    #[wasm_bindgen(getter)]
    pub fn lines(&self) -> u64 {
        self.lines
    }

    #[wasm_bindgen(getter)]
    pub fn overruns(&self) -> u64 {
        self.overruns
    }

    /// Serial output around the stall.
    #[wasm_bindgen(getter)]
    pub fn excerpt(&self) -> String {
        self.excerpt.clone()
    }
}

pub fn overrun_summary(stall_ms: u32, stall_at_ms: u32, duration_ms: u32) -> Result<OverrunSummary, String> {
    if duration_ms == 0 || duration_ms > 60_000 {
        return Err("duration must be between 1 and 60000 ms".into());
    }
    let options = EmulatorOptions {
        stalls: vec![Stall {
            at: Duration::from_millis(stall_at_ms.into()),
            length: Duration::from_millis(stall_ms.into()),
        }],
        ..EmulatorOptions::default()
    };
    let mut out = Vec::new();
    let report = run_virtual(
        &SignalSpec::default(),
        &mut out,
        f64::from(duration_ms) / 1000.0,
        &options,
    )
    .map_err(|e| e.to_string())?;
    let text = String::from_utf8(out).expect("serial lines are ASCII");
    let lines: Vec<&str> = text.lines().collect();
    let excerpt = match lines.iter().position(|l| *l == "fail") {
        Some(first) => {
            let from = first.saturating_sub(3);
            let to = (first + report.overruns as usize + 6).min(lines.len());
            lines[from..to].join("\n")
        }
        None => lines.iter().take(8).copied().collect::<Vec<_>>().join("\n"),
    };
    Ok(OverrunSummary {
        ticks: report.ticks,
        lines: report.lines_emitted,
        overruns: report.overruns,
        excerpt: excerpt.replace('\r', ""),
    })
}

#[wasm_bindgen]
pub fn explore_overruns(stall_ms: u32, stall_at_ms: u32, duration_ms: u32) -> Result<OverrunSummary, JsError> {
    overrun_summary(stall_ms, stall_at_ms, duration_ms).map_err(|e| JsError::new(&e))
}
