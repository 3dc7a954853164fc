//! Core building blocks for streaming a single-lead EKG from an emulated
//! acquisition board to a remote viewer.
//!
//! * [`serial`] is the byte-exact line format spoken between the acquisition
//!   board and the patient agent.
//! * [`message`] is the JSON unit relayed over the WebSocket.
//! * [`signal`] synthesizes EKG-like traces with known R-peak positions.
//! * [`device`] emulates the acquisition board: a 250 Hz tick filling a
//!   two-slot buffer, drained by a main loop onto a byte stream.
//! * [`dsp`] is the doctor-side processing: five-tap moving average, R-peak
//!   detection and heart rate.
//! * [`session`] names a patient stream on the relay.
//! * [`latency`] turns production/delivery timestamps into a percentile report.
//!
//! Everything here is synchronous and free of I/O runtimes so the same code
//! runs natively, in tests, and in the browser demo.

pub mod clock;
pub mod device;
pub mod dsp;
pub mod latency;
pub mod message;
pub mod sample;
pub mod serial;
pub mod session;
pub mod signal;
pub mod timestamp;

pub use message::EkgMessage;
pub use sample::{Channels, Sample, ADC_MAX, CHANNEL_COUNT};
pub use serial::{decode_serial, encode_serial, SerialLine};
pub use timestamp::Timestamp;

/// Acquisition rate of the board, in samples per second.
pub const SAMPLE_RATE_HZ: u32 = 250;

/// Spacing between two acquisition ticks.
pub const SAMPLE_PERIOD_MS: u32 = 1000 / SAMPLE_RATE_HZ;
