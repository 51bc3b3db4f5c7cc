//! Trainable models on top of `codesep-core`, built with candle.

pub mod atsp;
pub mod btd;
pub mod checkpoint;
pub mod codec;
pub mod dsp;
pub mod error;
pub mod layers;
pub mod params;
pub mod separator;
pub mod train;

pub use error::{Error, Result};
pub use params::{device, ParamStore, DTYPE};
