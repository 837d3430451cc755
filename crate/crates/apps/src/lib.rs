//! Applications on top of the driver: a two-port forwarder, a packet
//! generator and a register dump, plus the test frame format they share.

#![forbid(unsafe_code)]

pub mod cli;
pub mod dump;
pub mod forwarder;
pub mod frame;
pub mod generator;
pub mod stats;

use thiserror::Error;

pub use forwarder::{run_forwarder, DirStats, Forwarder, ForwarderConfig, RunSummary};
pub use frame::FrameBuilder;
pub use generator::{run_generator, GenConfig, GenMode, GenReport};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Frame(#[from] frame::FrameSizeError),
    #[error(transparent)]
    Platform(#[from] nicdrv::PlatformError),
    #[error(transparent)]
    Driver(#[from] nicdrv::DriverError),
    #[error(transparent)]
    Mempool(#[from] nicdrv::memory::MempoolError),
    #[error(transparent)]
    Bounds(#[from] nicdrv::memory::BoundsError),
    #[error(transparent)]
    Mmio(#[from] nicdrv::mmio::MmioError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
