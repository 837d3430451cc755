//! Deterministic software model of an ixgbe-style NIC.
//!
//! A [`ModelSystem`] owns the shared DMA address map, the virtual clock and a
//! fixed set of [`ModelNic`]s. Nothing runs in the background: the harness
//! pumps each NIC with [`ModelNic::step`], so with the same inputs and the same
//! driver actions every run produces the same access log, counters and wire
//! captures.

mod bus;
mod link;
mod nic;
pub mod pcap;
mod register;

use std::sync::Arc;

use thiserror::Error;

pub use bus::{DmaBus, VirtualClock, REGION_SHIFT};
pub use link::WireFrame;
pub use nic::{AccessCounts, AccessKind, AccessRecord, ModelNic, NicCounters};
pub use register::RegisterBehavior;

/// Smallest frame accepted on the wire (without FCS).
pub const MIN_FRAME: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingKind {
    Rx,
    Tx,
}

/// A device-side error the model detected instead of corrupting memory.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelFault {
    #[error("DMA to unmapped device address {address:#x} (+{len})")]
    UnmappedDma { address: u64, len: usize },
    #[error("{kind:?} ring rejected: base {base:#x} len {len}")]
    BadRing { kind: RingKind, base: u64, len: u32 },
    #[error("{kind:?} tail {tail} outside ring of {count}")]
    TailOutOfRange { kind: RingKind, tail: u32, count: u32 },
    #[error("tx descriptor {slot} has invalid length {len}")]
    BadTxLength { slot: u32, len: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("frame of {len} bytes outside {min}..={max}")]
    FrameSize { len: usize, min: usize, max: usize },
    #[error("register offset {offset:#x} is not modelled")]
    UnknownRegister { offset: u32 },
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Frames the ingress FIFO holds before tail-dropping.
    pub link_capacity: usize,
    /// Largest frame accepted by `inject` and by the tx engine.
    pub max_frame: usize,
    /// Virtual ticks charged per descriptor transaction.
    pub desc_cost: u64,
    /// Virtual ticks charged per register access.
    pub mmio_cost: u64,
    /// Record every access in an ordered log (counters are always kept).
    pub access_log: bool,
    /// Keep a copy of every transmitted frame for [`ModelNic::take_capture`].
    pub capture: bool,
    /// Seeds the MAC addresses.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            link_capacity: 4096,
            max_frame: 2048,
            desc_cost: 20,
            mmio_cost: 200,
            access_log: true,
            capture: true,
            seed: 0,
        }
    }
}

struct SystemInner {
    bus: DmaBus,
    clock: VirtualClock,
    nics: Vec<ModelNic>,
}

/// A set of model NICs sharing one address map and one clock.
#[derive(Clone)]
pub struct ModelSystem {
    inner: Arc<SystemInner>,
}

impl std::fmt::Debug for ModelSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSystem")
            .field("nics", &self.inner.nics.len())
            .field("now", &self.inner.clock.now())
            .finish()
    }
}

impl ModelSystem {
    pub fn new(count: usize, config: ModelConfig) -> Self {
        let bus = DmaBus::new();
        let clock = VirtualClock::new();
        let nics = (0..count)
            .map(|i| ModelNic::new(i, config.clone(), bus.clone(), clock.clone()))
            .collect();
        Self {
            inner: Arc::new(SystemInner { bus, clock, nics }),
        }
    }

    /// Two NICs wired back to back.
    pub fn pair(config: ModelConfig) -> Self {
        let sys = Self::new(2, config);
        sys.nics()[0].connect(&sys.nics()[1]);
        sys
    }

    pub fn nic(&self, index: usize) -> Option<&ModelNic> {
        self.inner.nics.get(index)
    }

    pub fn nics(&self) -> &[ModelNic] {
        &self.inner.nics
    }

    pub fn bus(&self) -> &DmaBus {
        &self.inner.bus
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.inner.clock
    }

    /// Steps every NIC once with the same budget.
    pub fn step_all(&self, budget: usize) -> usize {
        self.inner.nics.iter().map(|n| n.step(budget)).sum()
    }
}
