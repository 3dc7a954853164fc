use std::fmt;

use thiserror::Error;

pub const MILLIS_PER_DAY: u32 = 86_400_000;

/// Wall-clock time of day with millisecond resolution.
///
/// Timestamps are used for rendering only. They wrap at midnight, so code
/// consuming them must not assume monotonicity across `23:59:59.999`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    hours: u8,
    minutes: u8,
    seconds: u8,
    millis: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TimestampError {
    #[error("hours {0} out of range 0..=23")]
    Hours(u32),
    #[error("minutes {0} out of range 0..=59")]
    Minutes(u32),
    #[error("seconds {0} out of range 0..=59")]
    Seconds(u32),
    #[error("milliseconds {0} out of range 0..=999")]
    Millis(u32),
    #[error("{0} ms is past the end of the day")]
    PastMidnight(u32),
}

impl Timestamp {
    pub const MIDNIGHT: Timestamp = Timestamp {
        hours: 0,
        minutes: 0,
        seconds: 0,
        millis: 0,
    };

    pub fn new(hours: u32, minutes: u32, seconds: u32, millis: u32) -> Result<Self, TimestampError> {
        if hours > 23 {
            return Err(TimestampError::Hours(hours));
        }
        if minutes > 59 {
            return Err(TimestampError::Minutes(minutes));
        }
        if seconds > 59 {
            return Err(TimestampError::Seconds(seconds));
        }
        if millis > 999 {
            return Err(TimestampError::Millis(millis));
        }
        Ok(Timestamp {
            hours: hours as u8,
            minutes: minutes as u8,
            seconds: seconds as u8,
            millis: millis as u16,
        })
    }

    /// Builds a timestamp from milliseconds since midnight.
    pub fn from_millis(ms: u32) -> Result<Self, TimestampError> {
        if ms >= MILLIS_PER_DAY {
            return Err(TimestampError::PastMidnight(ms));
        }
        Ok(Timestamp {
            hours: (ms / 3_600_000) as u8,
            minutes: (ms / 60_000 % 60) as u8,
            seconds: (ms / 1000 % 60) as u8,
            millis: (ms % 1000) as u16,
        })
    }

    /// Reduces `ms` modulo one day first, so any value is accepted.
    pub fn from_millis_wrapping(ms: u64) -> Self {
        Self::from_millis((ms % MILLIS_PER_DAY as u64) as u32).expect("reduced modulo one day")
    }

    pub fn as_millis(self) -> u32 {
        self.hours as u32 * 3_600_000 + self.minutes as u32 * 60_000 + self.seconds as u32 * 1000 + self.millis as u32
    }

    pub fn wrapping_add_millis(self, ms: u32) -> Self {
        Self::from_millis_wrapping(self.as_millis() as u64 + ms as u64)
    }

    pub fn hours(self) -> u32 {
        self.hours as u32
    }

    pub fn minutes(self) -> u32 {
        self.minutes as u32
    }

    pub fn seconds(self) -> u32 {
        self.seconds as u32
    }

    pub fn millis(self) -> u32 {
        self.millis as u32
    }
}

/// Renders the fixed-width `HH:MM:SS.mmm` form used on the serial line.
impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02}:{:02}:{:02}.{:03}",
            self.hours, self.minutes, self.seconds, self.millis
        )
    }
}

/// Forward distance from `from` to `to` in milliseconds, going through
/// midnight when `to` is earlier in the day.
pub fn millis_between(from: u32, to: u32) -> u32 {
    if to >= from {
        to - from
    } else {
        MILLIS_PER_DAY - from + to
    }
}
