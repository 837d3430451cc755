//! Benchmarks for the driver on the device model: batch-size sweeps,
//! latency distributions, overflow-check cost, buffer custody traces, and
//! the unsafe-placement lint.

#![forbid(unsafe_code)]

pub mod custody;
pub mod export;
pub mod latency;
pub mod lint;
pub mod overflow;
pub mod sim;
pub mod sweep;

use nicdrv_apps::AppError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Latency(#[from] latency::LatencyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<nicdrv::PlatformError> for BenchError {
    fn from(e: nicdrv::PlatformError) -> Self {
        Self::App(e.into())
    }
}

impl From<nicdrv::DriverError> for BenchError {
    fn from(e: nicdrv::DriverError) -> Self {
        Self::App(e.into())
    }
}

impl From<nicdrv_apps::frame::FrameSizeError> for BenchError {
    fn from(e: nicdrv_apps::frame::FrameSizeError) -> Self {
        Self::App(e.into())
    }
}
