//! User-space poll-mode NIC driver with a deterministic software device.
//!
//! Layers, bottom up:
//!
//! * [`platform`]: device discovery, register mapping, pinned DMA memory.
//! * [`mmio`]: bounds-checked, exactly-once register access.
//! * [`memory`]: DMA buffer pools with exclusive-custody packet handles.
//! * [`ixgbe`]: the driver (init, batched rx/tx, stats).
//! * [`model`]: a software ixgbe used for tests and benchmarks.
//!
//! Unchecked memory operations are only allowed in `platform` and in the
//! buffer constructor of `memory`.

#![deny(unsafe_code)]

pub mod arith;
pub mod ixgbe;
pub mod memory;
pub mod mmio;
pub mod model;
#[allow(unsafe_code)]
pub mod platform;

pub use ixgbe::{DeviceStats, DriverConfig, DriverError, IxgbeDevice, NetDevice};
pub use memory::{Mempool, PacketBuffer};
pub use mmio::MmioRegion;
pub use model::{ModelConfig, ModelNic, ModelSystem};
pub use platform::{DeviceHandle, DeviceSpec, Platform, PlatformError};
