use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::platform::dma::{DmaError, DmaRegion, Translation, WeakDmaRegion};

use super::ModelFault;

/// Shared host-memory address map of a model system.
///
/// Region `n` (1-based allocation order) occupies device addresses
/// `n << 32 .. (n << 32) + len`. Keeping every region in its own 4 GiB slot
/// makes address-mixing bugs fault instead of silently hitting a neighbour.
#[derive(Clone, Default)]
pub struct DmaBus {
    regions: Arc<RwLock<Vec<WeakDmaRegion>>>,
}

pub const REGION_SHIFT: u32 = 32;
const OFFSET_MASK: u64 = (1 << REGION_SHIFT) - 1;

impl DmaBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates zeroed memory and registers it on the bus.
    pub fn allocate(&self, bytes: usize) -> Result<DmaRegion, DmaError> {
        if bytes as u64 > OFFSET_MASK {
            return Err(DmaError::OutOfMemory { bytes });
        }
        let mut regions = self.regions.write().expect("bus lock poisoned");
        let seq = regions.len() as u64 + 1;
        let region = DmaRegion::heap(
            bytes,
            Translation::Linear {
                base: seq << REGION_SHIFT,
            },
        )?;
        regions.push(region.downgrade());
        Ok(region)
    }

    /// Number of regions ever registered.
    pub fn region_count(&self) -> usize {
        self.regions.read().expect("bus lock poisoned").len()
    }

    /// Resolves `len` bytes at `address` to a live region and offset.
    pub fn resolve(&self, address: u64, len: usize) -> Result<(DmaRegion, usize), ModelFault> {
        let fault = || ModelFault::UnmappedDma { address, len };
        let seq = address >> REGION_SHIFT;
        if seq == 0 {
            return Err(fault());
        }
        let offset = (address & OFFSET_MASK) as usize;
        let region = {
            let regions = self.regions.read().expect("bus lock poisoned");
            regions
                .get(seq as usize - 1)
                .and_then(WeakDmaRegion::upgrade)
                .ok_or_else(fault)?
        };
        match offset.checked_add(len) {
            Some(end) if end <= region.len() => Ok((region, offset)),
            _ => Err(fault()),
        }
    }

    pub fn write(&self, address: u64, data: &[u8]) -> Result<(), ModelFault> {
        let (region, offset) = self.resolve(address, data.len())?;
        region.write(offset, data).map_err(|_| ModelFault::UnmappedDma {
            address,
            len: data.len(),
        })
    }

    pub fn read(&self, address: u64, buf: &mut [u8]) -> Result<(), ModelFault> {
        let (region, offset) = self.resolve(address, buf.len())?;
        region.read(offset, buf).map_err(|_| ModelFault::UnmappedDma {
            address,
            len: buf.len(),
        })
    }
}

/// Model virtual time in ticks. One tick is nominally one nanosecond.
#[derive(Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.0.load(Ordering::Acquire)
    }

    pub fn advance(&self, ticks: u64) -> u64 {
        self.0.fetch_add(ticks, Ordering::AcqRel) + ticks
    }

    /// Moves the clock forward to `tick` if it is in the future.
    pub fn advance_to(&self, tick: u64) {
        self.0.fetch_max(tick, Ordering::AcqRel);
    }
}
