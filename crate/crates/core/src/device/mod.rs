//! Emulation of the acquisition board.
//!
//! A 250 Hz tick reads six channel values into a [`DoubleBuffer`]; the main
//! loop drains it, stamps each sample with the current time and writes the
//! serial line. A tick that finds both slots full is an overrun and shows up
//! on the stream as a `fail` line.

mod buffer;
mod emulator;

pub use buffer::{DoubleBuffer, DrainSide, TickOutcome, TickSide};
pub use emulator::{
    run_emulator, run_virtual, BaudLimiter, EmulatorError, EmulatorOptions, EmulatorReport, Stall, TickClock,
};
