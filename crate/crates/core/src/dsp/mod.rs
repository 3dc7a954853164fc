//! Doctor-side processing of the relayed trace: powerline suppression with a
//! five-tap moving average, R-peak detection and heart rate.

mod filter;
mod peaks;

pub use filter::{MovingAverage5, TAPS};
pub use peaks::{heart_rate_from_rr, PeakDetector, PeakDetectorConfig, RPeak, MAX_REPORTED_BPM, MIN_REPORTED_BPM};

use crate::message::EkgMessage;

/// Group delay of the moving average, in samples.
pub const GROUP_DELAY_SAMPLES: usize = TAPS / 2;

/// One filtered output sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredPoint {
    /// Time of the input at the centre of the filter window.
    pub t_ms: u32,
    pub filtered_value: f64,
    pub is_r_peak: bool,
    /// Heart rate known when this point was produced.
    pub heart_rate_bpm: Option<f64>,
}

/// What one input produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineOutput {
    pub point: Option<FilteredPoint>,
    /// A peak accepted on this input. It refers to an earlier point.
    pub peak: Option<RPeak>,
}

/// Filter and detector chained for one session.
///
/// Streaming output cannot flag peaks on the point itself since a peak is
/// only accepted after the refractory period; consumers mark the earlier
/// point identified by [`RPeak::t_ms`]. [`process_messages`] does this for a
/// whole trace.
#[derive(Debug, Clone, Default)]
pub struct DspPipeline {
    filter: MovingAverage5,
    times: [u32; TAPS],
    seen: usize,
    detector: PeakDetector,
}

impl DspPipeline {
    pub fn new(config: PeakDetectorConfig) -> Self {
        DspPipeline {
            detector: PeakDetector::new(config),
            ..Default::default()
        }
    }

    pub fn heart_rate(&self) -> Option<f64> {
        self.detector.heart_rate()
    }

    pub fn push(&mut self, msg: EkgMessage) -> PipelineOutput {
        // Across a midnight wrap the filter window stays continuous; the
        // detector resets itself when it sees time go backwards.
        self.times[self.seen % TAPS] = msg.t_ms;
        self.seen += 1;

        let Some(filtered) = self.filter.push(msg.value as f64) else {
            return PipelineOutput::default();
        };
        let centre = self.times[(self.seen - 1 - GROUP_DELAY_SAMPLES) % TAPS];
        let peak = self.detector.push(centre, filtered);
        PipelineOutput {
            point: Some(FilteredPoint {
                t_ms: centre,
                filtered_value: filtered,
                is_r_peak: false,
                heart_rate_bpm: self.detector.heart_rate(),
            }),
            peak,
        }
    }

    /// Accepts any candidate still waiting out its refractory period.
    pub fn finish(&mut self) -> Option<RPeak> {
        self.detector.finish()
    }
}

/// Result of processing a complete trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProcessedTrace {
    pub points: Vec<FilteredPoint>,
    pub peaks: Vec<RPeak>,
}

/// Runs a whole trace through a fresh pipeline, marking peak points.
pub fn process_messages(messages: &[EkgMessage], config: &PeakDetectorConfig) -> ProcessedTrace {
    let mut pipeline = DspPipeline::new(config.clone());
    let mut trace = ProcessedTrace::default();
    for &msg in messages {
        let out = pipeline.push(msg);
        trace.points.extend(out.point);
        if let Some(peak) = out.peak {
            mark_peak(&mut trace.points, peak.t_ms);
            trace.peaks.push(peak);
        }
    }
    if let Some(peak) = pipeline.finish() {
        mark_peak(&mut trace.points, peak.t_ms);
        trace.peaks.push(peak);
    }
    trace
}

fn mark_peak(points: &mut [FilteredPoint], t_ms: u32) {
    if let Some(p) = points.iter_mut().rev().find(|p| p.t_ms == t_ms) {
        p.is_r_peak = true;
    }
}
