//! Production-to-delivery latency bookkeeping.

use serde::{Deserialize, Serialize};

use crate::timestamp::millis_between;

/// One delivered frame. Both times come from the same clock, in
/// milliseconds since midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub t_produced_ms: u32,
    pub t_delivered_ms: u32,
    pub delta_ms: u32,
}

impl LatencyRecord {
    /// Delivery is never before production on one clock; an apparent
    /// negative delta is a wrap through midnight.
    pub fn new(t_produced_ms: u32, t_delivered_ms: u32) -> Self {
        LatencyRecord {
            t_produced_ms,
            t_delivered_ms,
            delta_ms: millis_between(t_produced_ms, t_delivered_ms),
        }
    }
}

/// Summary of a latency run. Percentiles use the nearest-rank method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub n: usize,
    pub min: u32,
    pub p50: u32,
    pub p95: u32,
    pub p99: u32,
    pub max: u32,
    pub drop_count: u64,
}

impl LatencyReport {
    /// `None` when there is nothing to summarize.
    pub fn from_deltas(deltas: &[u32], drop_count: u64) -> Option<Self> {
        if deltas.is_empty() {
            return None;
        }
        let mut sorted = deltas.to_vec();
        sorted.sort_unstable();
        Some(LatencyReport {
            n: sorted.len(),
            min: sorted[0],
            p50: nearest_rank(&sorted, 50.0),
            p95: nearest_rank(&sorted, 95.0),
            p99: nearest_rank(&sorted, 99.0),
            max: sorted[sorted.len() - 1],
            drop_count,
        })
    }

    pub fn from_records(records: &[LatencyRecord], drop_count: u64) -> Option<Self> {
        let deltas: Vec<u32> = records.iter().map(|r| r.delta_ms).collect();
        Self::from_deltas(&deltas, drop_count)
    }
}

/// Smallest value with at least `p` percent of the data at or below it.
pub fn nearest_rank(sorted: &[u32], p: f64) -> u32 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
