//! Time-of-day sources used to stamp samples and deliveries.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::timestamp::MILLIS_PER_DAY;

/// Milliseconds since midnight, as seen by one component.
///
/// Components that compare timestamps (the latency harness, for one) must
/// share the same clock instance.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u32;
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u32 {
        (**self).now_ms()
    }
}

/// UTC wall clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u32 {
        let since_epoch = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis();
        (since_epoch % MILLIS_PER_DAY as u128) as u32
    }
}

/// Monotonic clock anchored to the wall clock once, at construction.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
    origin_ms: u32,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            origin: Instant::now(),
            origin_ms: SystemClock.now_ms(),
        }
    }

    pub fn starting_at(origin_ms: u32) -> Self {
        MonotonicClock {
            origin: Instant::now(),
            origin_ms: origin_ms % MILLIS_PER_DAY,
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ms(&self) -> u32 {
        let elapsed = self.origin.elapsed().as_millis() as u64;
        ((self.origin_ms as u64 + elapsed) % MILLIS_PER_DAY as u64) as u32
    }
}

/// Test clock, advanced by hand.
#[derive(Debug, Default)]
pub struct ManualClock {
    ms: AtomicU64,
}

impl ManualClock {
    pub fn new(start_ms: u32) -> Self {
        ManualClock {
            ms: AtomicU64::new(start_ms as u64),
        }
    }

    pub fn advance(&self, ms: u32) {
        self.ms.fetch_add(ms as u64, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u32) {
        self.ms.store(ms as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u32 {
        (self.ms.load(Ordering::SeqCst) % MILLIS_PER_DAY as u64) as u32
    }
}
