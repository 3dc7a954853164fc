use thiserror::Error;

use crate::timestamp::Timestamp;

/// Number of analog channels read on every tick.
pub const CHANNEL_COUNT: usize = 6;

/// Largest value produced by the 10-bit ADC.
pub const ADC_MAX: u16 = 1023;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("channel {index} value {value} exceeds the 10-bit ADC range")]
pub struct ChannelRangeError {
    pub index: usize,
    pub value: u32,
}

/// One reading of all six ADC channels, each in `0..=1023`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Channels([u16; CHANNEL_COUNT]);

impl Channels {
    pub fn new(values: [u16; CHANNEL_COUNT]) -> Result<Self, ChannelRangeError> {
        match values.iter().position(|&v| v > ADC_MAX) {
            Some(index) => Err(ChannelRangeError {
                index,
                value: values[index] as u32,
            }),
            None => Ok(Channels(values)),
        }
    }

    /// Saturates every value into the ADC range.
    pub fn clamped(values: [i64; CHANNEL_COUNT]) -> Self {
        Channels(values.map(|v| v.clamp(0, ADC_MAX as i64) as u16))
    }

    /// All channels at the same level (clamped).
    pub fn splat(value: u16) -> Self {
        Channels([value.min(ADC_MAX); CHANNEL_COUNT])
    }

    pub fn get(&self, index: usize) -> Option<u16> {
        self.0.get(index).copied()
    }

    pub fn as_array(&self) -> &[u16; CHANNEL_COUNT] {
        &self.0
    }
}

/// One 4 ms acquisition tick: time of encoding plus six channel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Sample {
    pub ts: Timestamp,
    pub channels: Channels,
}

impl Sample {
    pub fn new(ts: Timestamp, channels: Channels) -> Self {
        Sample { ts, channels }
    }
}
