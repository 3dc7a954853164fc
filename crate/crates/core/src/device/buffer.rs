use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use crate::sample::{Channels, Sample};
use crate::timestamp::Timestamp;

/// Result of one acquisition tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickOutcome {
    Stored,
    /// Both slots were still full; the values were discarded.
    Overrun,
}

struct Shared {
    slots: [UnsafeCell<Channels>; 2],
    full: [AtomicBool; 2],
    overruns: AtomicU64,
}

// SAFETY: a slot is written only by the tick side while its flag is clear and
// read only by the drain side while its flag is set. Flags are published with
// release stores and observed with acquire loads, so the two sides never
// access the same slot concurrently. `TickSide` and `DrainSide` are not
// `Clone`, which keeps the one-producer/one-consumer contract.
unsafe impl Sync for Shared {}

impl Shared {
    fn new() -> Self {
        Shared {
            slots: [
                UnsafeCell::new(Channels::default()),
                UnsafeCell::new(Channels::default()),
            ],
            full: [AtomicBool::new(false), AtomicBool::new(false)],
            overruns: AtomicU64::new(0),
        }
    }

    fn tick(&self, write_index: &mut usize, values: Channels) -> TickOutcome {
        let b = *write_index;
        if self.full[b].load(Ordering::Acquire) {
            self.overruns.fetch_add(1, Ordering::AcqRel);
            return TickOutcome::Overrun;
        }
        // SAFETY: flag clear, so the drain side is not reading this slot.
        unsafe { *self.slots[b].get() = values };
        self.full[b].store(true, Ordering::Release);
        *write_index = b ^ 1;
        TickOutcome::Stored
    }

    fn drain(&self, read_index: &mut usize, now: Timestamp) -> Option<Sample> {
        let r = *read_index;
        if !self.full[r].load(Ordering::Acquire) {
            return None;
        }
        // SAFETY: flag set, so the tick side is not writing this slot.
        let values = unsafe { *self.slots[r].get() };
        self.full[r].store(false, Ordering::Release);
        *read_index = r ^ 1;
        Some(Sample::new(now, values))
    }

    fn take_overruns(&self) -> u64 {
        self.overruns.swap(0, Ordering::AcqRel)
    }

    fn flags(&self) -> [bool; 2] {
        [
            self.full[0].load(Ordering::Acquire),
            self.full[1].load(Ordering::Acquire),
        ]
    }
}

/// The acquisition board's two-slot buffer.
///
/// The tick side fills slot `write_index`, marks it full and flips to the
/// other slot. If that slot is still full the tick is an overrun: values are
/// dropped and `write_index` stays put. The drain side empties slots in the
/// order they were filled and is the only side that clears a full flag.
///
/// Used directly it is a single-threaded automaton; [`DoubleBuffer::split`]
/// hands the two sides to different threads.
pub struct DoubleBuffer {
    shared: Arc<Shared>,
    write_index: usize,
    read_index: usize,
}

impl Default for DoubleBuffer {
    fn default() -> Self {
        Self::new()
    }
}

impl DoubleBuffer {
    pub fn new() -> Self {
        DoubleBuffer {
            shared: Arc::new(Shared::new()),
            write_index: 0,
            read_index: 0,
        }
    }

    pub fn tick(&mut self, values: Channels) -> TickOutcome {
        self.shared.tick(&mut self.write_index, values)
    }

    /// Oldest full slot, stamped with `now`.
    pub fn drain(&mut self, now: Timestamp) -> Option<Sample> {
        self.shared.drain(&mut self.read_index, now)
    }

    /// Overruns since the last call.
    pub fn take_overruns(&mut self) -> u64 {
        self.shared.take_overruns()
    }

    pub fn write_index(&self) -> usize {
        self.write_index
    }

    pub fn read_index(&self) -> usize {
        self.read_index
    }

    pub fn full_flags(&self) -> [bool; 2] {
        self.shared.flags()
    }

    pub fn split(self) -> (TickSide, DrainSide) {
        (
            TickSide {
                shared: Arc::clone(&self.shared),
                write_index: self.write_index,
            },
            DrainSide {
                shared: self.shared,
                read_index: self.read_index,
            },
        )
    }
}

/// Producer half of a split [`DoubleBuffer`].
pub struct TickSide {
    shared: Arc<Shared>,
    write_index: usize,
}

impl TickSide {
    pub fn tick(&mut self, values: Channels) -> TickOutcome {
        self.shared.tick(&mut self.write_index, values)
    }
}

/// Consumer half of a split [`DoubleBuffer`].
pub struct DrainSide {
    shared: Arc<Shared>,
    read_index: usize,
}

impl DrainSide {
    pub fn drain(&mut self, now: Timestamp) -> Option<Sample> {
        self.shared.drain(&mut self.read_index, now)
    }

    pub fn take_overruns(&mut self) -> u64 {
        self.shared.take_overruns()
    }
}
