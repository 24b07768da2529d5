//! Snapshot HDR imaging from multi-exposure CFA RAW data: simulation,
//! radiometric processing, the two-stage reconstruction pipeline, metrics
//! and file formats.

pub mod dataset;
pub mod error;
pub mod hdrio;
pub mod imgcore;
pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod radiance;
pub mod scenes;
pub mod selftest;
pub mod sim;
pub mod toy;

pub use error::{Error, Result};
