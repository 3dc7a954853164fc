//! Command-line tools around the EKG pipeline: the device emulator, the
//! offline DSP oracle and the end-to-end latency bench.

pub mod args;
pub mod bench;
pub mod offline;
