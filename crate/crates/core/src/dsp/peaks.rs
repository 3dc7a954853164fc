use std::collections::VecDeque;

/// Tuning of the R-peak detector. Amplitudes are in ADC counts above the
/// running baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakDetectorConfig {
    /// No two accepted peaks may be closer than this.
    pub refractory_ms: u32,
    /// Threshold as a fraction of the decayed recent peak amplitude.
    pub threshold_fraction: f64,
    pub decay_half_life_ms: f64,
    /// Threshold used until the first peak has been accepted.
    pub seed_excursion_counts: f64,
    /// Lower bound of the adaptive threshold.
    pub min_excursion_counts: f64,
    /// Time constant of the exponential baseline tracker.
    pub baseline_time_constant_ms: f64,
    /// Number of RR intervals averaged into the heart rate.
    pub rr_window: usize,
}

impl Default for PeakDetectorConfig {
    fn default() -> Self {
        PeakDetectorConfig {
            refractory_ms: 200,
            threshold_fraction: 0.6,
            decay_half_life_ms: 2000.0,
            seed_excursion_counts: 150.0,
            min_excursion_counts: 50.0,
            baseline_time_constant_ms: 1000.0,
            rr_window: 8,
        }
    }
}

/// Lowest and highest heart rate ever reported.
pub const MIN_REPORTED_BPM: f64 = 20.0;
pub const MAX_REPORTED_BPM: f64 = 300.0;

/// An accepted R peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RPeak {
    pub t_ms: u32,
    pub value: f64,
    /// Height above the baseline at the time of detection.
    pub amplitude: f64,
    /// Heart rate including this beat, once at least two peaks are known.
    pub heart_rate_bpm: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    t_ms: u32,
    value: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    point: Point,
    amplitude: f64,
}

/// `60000 / mean(rr)`, or `None` when the window is empty or the rate falls
/// outside the reportable range.
pub fn heart_rate_from_rr(rr_ms: &[u32]) -> Option<f64> {
    if rr_ms.is_empty() {
        return None;
    }
    let mean = rr_ms.iter().map(|&rr| rr as f64).sum::<f64>() / rr_ms.len() as f64;
    let bpm = 60_000.0 / mean;
    (MIN_REPORTED_BPM..=MAX_REPORTED_BPM).contains(&bpm).then_some(bpm)
}

/// Adaptive-threshold local-maximum R-peak detector.
///
/// A local maximum whose height above the running baseline exceeds the
/// threshold becomes a candidate. A higher candidate within the refractory
/// period replaces it; once the refractory period has passed without one the
/// candidate is accepted. Acceptance is therefore reported up to one
/// refractory period after the peak itself, and the returned [`RPeak`]
/// carries the peak's own time.
///
/// Until the first beat the threshold is `seed_excursion_counts`; afterwards
/// it is `threshold_fraction` of the last accepted amplitude, decaying with
/// `decay_half_life_ms`, floored at `min_excursion_counts`.
///
/// Input times must be nondecreasing. A time that goes backwards (midnight
/// wrap) resets the detector.
#[derive(Debug, Clone)]
pub struct PeakDetector {
    config: PeakDetectorConfig,
    baseline: Option<f64>,
    last_t: Option<u32>,
    prev: Option<Point>,
    cur: Option<Point>,
    pending: Option<Candidate>,
    envelope: Option<(f64, u32)>,
    last_peak_t: Option<u32>,
    rr: VecDeque<u32>,
}

impl Default for PeakDetector {
    fn default() -> Self {
        Self::new(PeakDetectorConfig::default())
    }
}

impl PeakDetector {
    pub fn new(config: PeakDetectorConfig) -> Self {
        PeakDetector {
            rr: VecDeque::with_capacity(config.rr_window),
            config,
            baseline: None,
            last_t: None,
            prev: None,
            cur: None,
            pending: None,
            envelope: None,
            last_peak_t: None,
        }
    }

    pub fn config(&self) -> &PeakDetectorConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.config.clone());
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    pub fn rr_intervals(&self) -> impl Iterator<Item = u32> + '_ {
        self.rr.iter().copied()
    }

    pub fn heart_rate(&self) -> Option<f64> {
        let rr: Vec<u32> = self.rr.iter().copied().collect();
        heart_rate_from_rr(&rr)
    }

    /// Current threshold, in counts above baseline, at time `t_ms`.
    pub fn threshold_at(&self, t_ms: u32) -> f64 {
        match self.envelope {
            None => self.config.seed_excursion_counts,
            Some((amplitude, since)) => {
                let age = t_ms.saturating_sub(since) as f64;
                let decayed = amplitude * 0.5f64.powf(age / self.config.decay_half_life_ms);
                (self.config.threshold_fraction * decayed).max(self.config.min_excursion_counts)
            }
        }
    }

    /// Feeds one filtered point; returns a peak when one is accepted.
    pub fn push(&mut self, t_ms: u32, value: f64) -> Option<RPeak> {
        if self.last_t.is_some_and(|last| t_ms < last) {
            self.reset();
        }
        let dt = self.last_t.map_or(0, |last| t_ms - last) as f64;
        self.last_t = Some(t_ms);
        let baseline = match self.baseline {
            None => value,
            Some(b) => {
                let alpha = 1.0 - (-dt / self.config.baseline_time_constant_ms).exp();
                b + alpha * (value - b)
            }
        };
        self.baseline = Some(baseline);

        let mut accepted = None;
        if let (Some(prev), Some(cur)) = (self.prev, self.cur) {
            if let Some(pending) = self.pending {
                if cur.t_ms >= pending.point.t_ms + self.config.refractory_ms {
                    accepted = Some(self.accept(pending));
                }
            }
            if cur.value >= prev.value && cur.value > value {
                self.consider(cur, cur.value - baseline);
            }
        }
        self.prev = self.cur;
        self.cur = Some(Point { t_ms, value });
        accepted
    }

    /// Accepts a still-pending candidate at the end of a trace.
    pub fn finish(&mut self) -> Option<RPeak> {
        self.pending.take().map(|c| self.accept(c))
    }

    fn consider(&mut self, point: Point, amplitude: f64) {
        if amplitude <= self.threshold_at(point.t_ms) {
            return;
        }
        if self
            .last_peak_t
            .is_some_and(|last| point.t_ms < last + self.config.refractory_ms)
        {
            return;
        }
        match self.pending {
            Some(p) if point.value <= p.point.value => {}
            _ => self.pending = Some(Candidate { point, amplitude }),
        }
    }

    fn accept(&mut self, candidate: Candidate) -> RPeak {
        self.pending = None;
        let t = candidate.point.t_ms;
        if let Some(last) = self.last_peak_t {
            if self.rr.len() == self.config.rr_window {
                self.rr.pop_front();
            }
            self.rr.push_back(t - last);
        }
        self.last_peak_t = Some(t);
        self.envelope = Some((candidate.amplitude, t));
        RPeak {
            t_ms: t,
            value: candidate.point.value,
            amplitude: candidate.amplitude,
            heart_rate_bpm: self.heart_rate(),
        }
    }
}
