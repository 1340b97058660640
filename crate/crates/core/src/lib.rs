//! Software GNSS L1 baseband engine and parallel-execution harness.
//!
//! The receiver half synthesizes C/A signals, acquires them with a
//! parallel code phase search and tracks them with early/prompt/late
//! correlators. The harness half runs channels on a persistent worker pool
//! in two-phase epochs and measures multi-instance throughput through the
//! effective running time (makespan of N simultaneous instances over N).

pub mod acquisition;
pub mod bench;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod io;
pub mod signal;
pub mod tracking;

pub use error::{Error, Result};
