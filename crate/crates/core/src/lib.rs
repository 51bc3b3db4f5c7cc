//! Signal processing, quantization, bitstream and evaluation primitives for
//! joint speech separation and low-bitrate compression.

pub mod bitstream;
pub mod error;
pub mod metrics;
pub mod rvq;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use signal::Waveform;
