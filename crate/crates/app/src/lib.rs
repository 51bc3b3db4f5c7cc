//! Joint separation and coding: training orchestration, inference pipelines
//! and evaluation.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
