//! Synthetic single-lead EKG.
//!
//! Channel 0 carries a PQRST template built from Gaussian bumps, repeating at
//! the configured heart rate, plus an optional powerline sinusoid and white
//! noise. Channels 1 to 5 sit at the baseline. The generator also reports
//! which sample indices hold an R peak so detectors can be scored.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{Channels, Sample, ADC_MAX, CHANNEL_COUNT};
use crate::timestamp::Timestamp;
use crate::{SAMPLE_PERIOD_MS, SAMPLE_RATE_HZ};

/// Parameters of the synthetic trace, in ADC counts where applicable.
///
/// Loadable from a flat TOML document; every key is optional:
///
/// ```toml
/// heart_rate_bpm = 72.0
/// amplitude_counts = 300
/// baseline_counts = 512
/// powerline_hz = 50.0
/// powerline_amplitude_counts = 30.0
/// powerline_phase_rad = 0.0
/// noise_rms_counts = 2.0
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSpec {
    pub heart_rate_bpm: f64,
    /// Height of the R wave above baseline. Zero turns the heart template off.
    pub amplitude_counts: i32,
    pub baseline_counts: i32,
    /// Zero disables the powerline component.
    pub powerline_hz: f64,
    pub powerline_amplitude_counts: f64,
    pub powerline_phase_rad: f64,
    pub noise_rms_counts: f64,
    pub seed: u64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            heart_rate_bpm: 60.0,
            amplitude_counts: 300,
            baseline_counts: 512,
            powerline_hz: 50.0,
            powerline_amplitude_counts: 0.0,
            powerline_phase_rad: 0.0,
            noise_rms_counts: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),
    #[error("cannot read signal spec file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse signal spec file: {0}")]
    Parse(#[from] toml::de::Error),
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        let invalid = |msg: String| Err(SignalError::InvalidSpec(msg));
        if !(30.0..=220.0).contains(&self.heart_rate_bpm) {
            return invalid(format!("heart_rate_bpm {} outside 30..=220", self.heart_rate_bpm));
        }
        if !(0..=511).contains(&self.amplitude_counts) {
            return invalid(format!("amplitude_counts {} outside 0..=511", self.amplitude_counts));
        }
        if !(0..=ADC_MAX as i32).contains(&self.baseline_counts) {
            return invalid(format!("baseline_counts {} outside 0..=1023", self.baseline_counts));
        }
        let nyquist = SAMPLE_RATE_HZ as f64 / 2.0;
        if !(self.powerline_hz >= 0.0 && self.powerline_hz < nyquist) {
            return invalid(format!("powerline_hz {} outside 0..{nyquist}", self.powerline_hz));
        }
        for (name, value) in [
            ("powerline_amplitude_counts", self.powerline_amplitude_counts),
            ("noise_rms_counts", self.noise_rms_counts),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return invalid(format!("{name} must be finite and non-negative, got {value}"));
            }
        }
        if !self.powerline_phase_rad.is_finite() {
            return invalid("powerline_phase_rad must be finite".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SignalError> {
        let spec: SignalSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SignalError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Beat-to-beat interval in seconds.
    pub fn rr_seconds(&self) -> f64 {
        60.0 / self.heart_rate_bpm
    }
}

struct Wave {
    /// Fraction of the R amplitude.
    gain: f64,
    /// Centre relative to the R peak, seconds.
    offset_s: f64,
    width_s: f64,
    /// P and T move with the RR interval, QRS does not.
    scales_with_rate: bool,
}

const PQRST: [Wave; 5] = [
    Wave {
        gain: 0.15,
        offset_s: -0.20,
        width_s: 0.025,
        scales_with_rate: true,
    },
    Wave {
        gain: -0.10,
        offset_s: -0.03,
        width_s: 0.010,
        scales_with_rate: false,
    },
    Wave {
        gain: 1.00,
        offset_s: 0.0,
        width_s: 0.012,
        scales_with_rate: false,
    },
    Wave {
        gain: -0.20,
        offset_s: 0.03,
        width_s: 0.010,
        scales_with_rate: false,
    },
    Wave {
        gain: 0.30,
        offset_s: 0.30,
        width_s: 0.045,
        scales_with_rate: true,
    },
];

/// One generated tick plus its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratedTick {
    pub channels: Channels,
    pub is_r_peak: bool,
}

/// Streaming generator; yields channel values one 4 ms tick at a time.
#[derive(Debug, Clone)]
pub struct SignalGenerator {
    spec: SignalSpec,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    index: u64,
    rr_s: f64,
    /// sqrt(RR), stretching P and T placement with the beat interval.
    stretch: f64,
}

impl SignalGenerator {
    pub fn new(spec: SignalSpec) -> Result<Self, SignalError> {
        spec.validate()?;
        let noise = (spec.noise_rms_counts > 0.0)
            .then(|| Normal::new(0.0, spec.noise_rms_counts).expect("validated non-negative"));
        let rr_s = spec.rr_seconds();
        Ok(SignalGenerator {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            noise,
            index: 0,
            rr_s,
            stretch: rr_s.sqrt(),
            spec,
        })
    }

    pub fn spec(&self) -> &SignalSpec {
        &self.spec
    }

    /// Time of beat `k`'s R peak. The first beat sits half an interval in.
    fn beat_time(&self, k: i64) -> f64 {
        (k as f64 + 0.5) * self.rr_s
    }

    /// Sample index carrying beat `k`'s R peak.
    fn beat_index(&self, k: i64) -> i64 {
        (self.beat_time(k) * SAMPLE_RATE_HZ as f64).round() as i64
    }

    fn template(&self, t: f64) -> f64 {
        let amplitude = self.spec.amplitude_counts as f64;
        if amplitude == 0.0 {
            return 0.0;
        }
        let nearest = (t / self.rr_s - 0.5).round() as i64;
        let mut acc = 0.0;
        for k in (nearest - 2).max(0)..=nearest + 2 {
            let dt = t - self.beat_time(k);
            for wave in &PQRST {
                let (offset, width) = if wave.scales_with_rate {
                    (wave.offset_s * self.stretch, wave.width_s * self.stretch)
                } else {
                    (wave.offset_s, wave.width_s)
                };
                let z = (dt - offset) / width;
                acc += wave.gain * (-0.5 * z * z).exp();
            }
        }
        amplitude * acc
    }

    fn is_r_peak_index(&self, index: u64) -> bool {
        if self.spec.amplitude_counts == 0 {
            return false;
        }
        let t = index as f64 / SAMPLE_RATE_HZ as f64;
        let k = (t / self.rr_s - 0.5).round() as i64;
        (k - 1..=k + 1).any(|k| k >= 0 && self.beat_index(k) == index as i64)
    }

    pub fn next_tick(&mut self) -> GeneratedTick {
        let index = self.index;
        self.index += 1;
        let t = index as f64 / SAMPLE_RATE_HZ as f64;

        let mut x = self.spec.baseline_counts as f64 + self.template(t);
        if self.spec.powerline_hz > 0.0 {
            x += self.spec.powerline_amplitude_counts
                * (2.0 * PI * self.spec.powerline_hz * t + self.spec.powerline_phase_rad).sin();
        }
        if let Some(noise) = &self.noise {
            x += noise.sample(&mut self.rng);
        }

        let mut values = [self.spec.baseline_counts as i64; CHANNEL_COUNT];
        values[0] = x.round() as i64;
        GeneratedTick {
            channels: Channels::clamped(values),
            is_r_peak: self.is_r_peak_index(index),
        }
    }
}

impl Iterator for SignalGenerator {
    type Item = GeneratedTick;

    fn next(&mut self) -> Option<GeneratedTick> {
        Some(self.next_tick())
    }
}

/// A finite trace with its ground-truth R-peak sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSignal {
    pub samples: Vec<Sample>,
    pub r_peaks: Vec<usize>,
}

/// Generates `n` samples at 4 ms spacing, starting at midnight.
pub fn generate_signal(spec: &SignalSpec, n: usize) -> Result<GeneratedSignal, SignalError> {
    generate_signal_from(spec, n, Timestamp::MIDNIGHT)
}

pub fn generate_signal_from(spec: &SignalSpec, n: usize, start: Timestamp) -> Result<GeneratedSignal, SignalError> {
    let generator = SignalGenerator::new(spec.clone())?;
    let mut samples = Vec::with_capacity(n);
    let mut r_peaks = Vec::new();
    let mut ts = start;
    for (i, tick) in generator.take(n).enumerate() {
        samples.push(Sample::new(ts, tick.channels));
        if tick.is_r_peak {
            r_peaks.push(i);
        }
        ts = ts.wrapping_add_millis(SAMPLE_PERIOD_MS);
    }
    Ok(GeneratedSignal { samples, r_peaks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(bpm: f64) -> SignalSpec {
        SignalSpec {
            heart_rate_bpm: bpm,
            ..SignalSpec::default()
        }
    }

    #[test]
    fn zero_samples() {
        let sig = generate_signal(&SignalSpec::default(), 0).unwrap();
        assert!(sig.samples.is_empty());
        assert!(sig.r_peaks.is_empty());
    }

    #[test]
    fn sixty_bpm_gives_one_peak_per_250_samples() {
        let sig = generate_signal(&quiet(60.0), 2500).unwrap();
        assert_eq!(sig.r_peaks.len(), 10);
        assert!(sig.r_peaks.windows(2).all(|w| w[1] - w[0] == 250));
    }

    #[test]
    fn ground_truth_marks_the_channel_maximum_of_each_beat() {
        let sig = generate_signal(&quiet(75.0), 250 * 8).unwrap();
        for &peak in &sig.r_peaks {
            let lo = peak.saturating_sub(20);
            let hi = (peak + 20).min(sig.samples.len() - 1);
            let max = (lo..=hi).map(|i| sig.samples[i].channels.as_array()[0]).max().unwrap();
            assert_eq!(sig.samples[peak].channels.as_array()[0], max);
        }
    }

    #[test]
    fn timestamps_are_4ms_apart() {
        let sig = generate_signal(&SignalSpec::default(), 100).unwrap();
        for w in sig.samples.windows(2) {
            assert_eq!(w[1].ts.as_millis() - w[0].ts.as_millis(), 4);
        }
    }

    #[test]
    fn idle_channels_hold_baseline() {
        let sig = generate_signal(&SignalSpec::default(), 300).unwrap();
        for s in &sig.samples {
            assert!(s.channels.as_array()[1..].iter().all(|&v| v == 512));
        }
    }

    #[test]
    fn powerline_only_matches_direct_evaluation() {
        let spec = SignalSpec {
            amplitude_counts: 0,
            powerline_hz: 50.0,
            powerline_amplitude_counts: 100.0,
            powerline_phase_rad: 0.3,
            ..SignalSpec::default()
        };
        let sig = generate_signal(&spec, 1000).unwrap();
        assert!(sig.r_peaks.is_empty());
        for (k, s) in sig.samples.iter().enumerate() {
            let expected = 512.0 + 100.0 * (2.0 * PI * 50.0 * k as f64 / 250.0 + 0.3).sin();
            let got = s.channels.as_array()[0] as f64;
            assert!((got - expected).abs() <= 0.5, "k={k} got={got} expected={expected}");
        }
    }

    #[test]
    fn extreme_specs_clamp() {
        let spec = SignalSpec {
            amplitude_counts: 511,
            baseline_counts: 1023,
            powerline_amplitude_counts: 5000.0,
            noise_rms_counts: 400.0,
            ..SignalSpec::default()
        };
        let sig = generate_signal(&spec, 2000).unwrap();
        assert!(sig
            .samples
            .iter()
            .all(|s| s.channels.as_array().iter().all(|&v| v <= 1023)));
        assert!(sig.samples.iter().any(|s| s.channels.as_array()[0] == 0));
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = SignalSpec {
            noise_rms_counts: 10.0,
            seed: 42,
            ..SignalSpec::default()
        };
        let a = generate_signal(&spec, 500).unwrap();
        let b = generate_signal(&spec, 500).unwrap();
        assert_eq!(a, b);
        let c = generate_signal(&SignalSpec { seed: 43, ..spec }, 500).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn rejects_invalid_specs() {
        for spec in [
            SignalSpec {
                heart_rate_bpm: 29.9,
                ..SignalSpec::default()
            },
            SignalSpec {
                heart_rate_bpm: 221.0,
                ..SignalSpec::default()
            },
            SignalSpec {
                amplitude_counts: 512,
                ..SignalSpec::default()
            },
            SignalSpec {
                amplitude_counts: -1,
                ..SignalSpec::default()
            },
            SignalSpec {
                powerline_hz: 125.0,
                ..SignalSpec::default()
            },
            SignalSpec {
                noise_rms_counts: -1.0,
                ..SignalSpec::default()
            },
            SignalSpec {
                powerline_amplitude_counts: f64::NAN,
                ..SignalSpec::default()
            },
        ] {
            assert!(
                matches!(generate_signal(&spec, 1), Err(SignalError::InvalidSpec(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn loads_flat_toml() {
        let spec = SignalSpec::from_toml_str("heart_rate_bpm = 72.0\nseed = 9\n").unwrap();
        assert_eq!(spec.heart_rate_bpm, 72.0);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.baseline_counts, 512);
        assert!(SignalSpec::from_toml_str("heart_rate = 72.0\n").is_err());
        assert!(SignalSpec::from_toml_str("heart_rate_bpm = 10.0\n").is_err());
    }
}
