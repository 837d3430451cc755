//! Fixed-capacity pools of DMA packet buffers.
//!
//! A [`PacketBuffer`] is the only handle to its slot of pool memory. Passing
//! it to the driver moves it into a ring slot; getting it back from `rx_batch`
//! moves it out again. Dropping a buffer returns it to the pool it came from,
//! so a buffer can be lost only by leaking the handle.
//!
//! The pool does not trust handles: it keeps a free bitmap and a generation
//! number per slot, so a handle fabricated with [`Mempool::forge`] (test
//! harnesses replaying old tokens) is reported as a double free or a stale
//! handle instead of corrupting the free list.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

use crate::platform::dma::{DmaError, DmaRegion, DmaWindow};
use crate::platform::{DeviceHandle, PlatformError};

pub const DEFAULT_ENTRY_SIZE: usize = 2048;
pub const ENTRY_ALIGN: usize = 64;

/// Buffers needed so that neither direction of a forwarding pair ever starves:
/// one full rx ring, one full tx ring and one batch in flight each way.
pub const fn default_pool_capacity(ring_size: usize, max_batch: usize) -> usize {
    2 * ring_size + 2 * max_batch
}

#[derive(Debug, Error)]
pub enum MempoolError {
    #[error("pool capacity must be positive")]
    ZeroCapacity,
    #[error("entry size {0} must be a positive multiple of 64")]
    InvalidEntrySize(usize),
    #[error("pool needs {need} bytes but the region has {have}")]
    RegionTooSmall { need: usize, have: usize },
    #[error("entry {index} would straddle a non-contiguous page boundary")]
    StraddlesPage { index: usize },
    #[error(transparent)]
    Platform(#[from] PlatformError),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FreeError {
    #[error("buffer of pool {found} returned to pool {expected}")]
    PoolMismatch { expected: u64, found: u64 },
    #[error("buffer {index} is already free")]
    DoubleFree { index: u32 },
    #[error("handle for buffer {index} is stale (slot was reallocated)")]
    StaleHandle { index: u32 },
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("buffer access of {len} bytes at {offset} exceeds entry size {size}")]
pub struct BoundsError {
    pub offset: usize,
    pub len: usize,
    pub size: usize,
}

/// Identifies one allocation of one slot; used to replay handles in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferToken {
    pub pool: u64,
    pub index: u32,
    pub generation: u32,
}

struct PoolState {
    stack: Vec<u32>,
    free: Vec<bool>,
    generation: Vec<u32>,
    peak: usize,
    violations: u64,
}

struct PoolInner {
    id: u64,
    region: DmaRegion,
    entry_size: usize,
    capacity: usize,
    state: Mutex<PoolState>,
}

impl PoolInner {
    fn state(&self) -> MutexGuard<'_, PoolState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn check_return(&self, st: &PoolState, index: u32, generation: u32) -> Result<(), FreeError> {
        let i = index as usize;
        if i >= self.capacity || st.generation[i] != generation {
            Err(FreeError::StaleHandle { index })
        } else if st.free[i] {
            Err(FreeError::DoubleFree { index })
        } else {
            Ok(())
        }
    }

    fn give_back(&self, index: u32, generation: u32) -> Result<(), FreeError> {
        let mut st = self.state();
        match self.check_return(&st, index, generation) {
            Ok(()) => {
                st.free[index as usize] = true;
                st.stack.push(index);
                Ok(())
            }
            Err(e) => {
                st.violations += 1;
                Err(e)
            }
        }
    }
}

/// A pool of equally sized DMA buffers. Clones share the pool.
#[derive(Clone)]
pub struct Mempool {
    inner: Arc<PoolInner>,
}

impl fmt::Debug for Mempool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mempool")
            .field("id", &self.inner.id)
            .field("capacity", &self.inner.capacity)
            .field("entry_size", &self.inner.entry_size)
            .field("free", &self.free_count())
            .finish()
    }
}

static NEXT_POOL_ID: AtomicU64 = AtomicU64::new(1);

impl Mempool {
    /// Lays out `capacity` entries of `entry_size` bytes over `region`.
    pub fn new(region: DmaRegion, capacity: usize, entry_size: usize) -> Result<Self, MempoolError> {
        if capacity == 0 {
            return Err(MempoolError::ZeroCapacity);
        }
        if entry_size == 0 || entry_size % ENTRY_ALIGN != 0 || u32::try_from(capacity).is_err() {
            return Err(MempoolError::InvalidEntrySize(entry_size));
        }
        let need = capacity
            .checked_mul(entry_size)
            .ok_or(MempoolError::RegionTooSmall {
                need: usize::MAX,
                have: region.len(),
            })?;
        if need > region.len() {
            return Err(MempoolError::RegionTooSmall {
                need,
                have: region.len(),
            });
        }
        if region.page_size().is_some() {
            for index in 0..capacity {
                let start = index * entry_size;
                let first = region
                    .translate(start)
                    .map_err(|_| MempoolError::StraddlesPage { index })?;
                let last = region
                    .translate(start + entry_size - 1)
                    .map_err(|_| MempoolError::StraddlesPage { index })?;
                if last - first != entry_size as u64 - 1 {
                    return Err(MempoolError::StraddlesPage { index });
                }
            }
        }
        let state = PoolState {
            stack: (0..capacity as u32).rev().collect(),
            free: vec![true; capacity],
            generation: vec![0; capacity],
            peak: 0,
            violations: 0,
        };
        Ok(Self {
            inner: Arc::new(PoolInner {
                id: NEXT_POOL_ID.fetch_add(1, Ordering::Relaxed),
                region,
                entry_size,
                capacity,
                state: Mutex::new(state),
            }),
        })
    }

    /// Allocates backing memory from the device and builds a pool over it.
    pub fn allocate(device: &DeviceHandle, capacity: usize, entry_size: usize) -> Result<Self, MempoolError> {
        if capacity == 0 {
            return Err(MempoolError::ZeroCapacity);
        }
        if entry_size == 0 || entry_size % ENTRY_ALIGN != 0 {
            return Err(MempoolError::InvalidEntrySize(entry_size));
        }
        let bytes = capacity
            .checked_mul(entry_size)
            .ok_or(MempoolError::Platform(PlatformError::Dma(
                DmaError::OutOfMemory { bytes: usize::MAX },
            )))?;
        let region = device.allocate_dma(bytes, false)?;
        Self::new(region, capacity, entry_size)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn capacity(&self) -> usize {
        self.inner.capacity
    }

    pub fn entry_size(&self) -> usize {
        self.inner.entry_size
    }

    pub fn region(&self) -> &DmaRegion {
        &self.inner.region
    }

    pub fn free_count(&self) -> usize {
        self.inner.state().stack.len()
    }

    pub fn in_use(&self) -> usize {
        self.inner.capacity - self.free_count()
    }

    /// Highest number of buffers outside the pool since creation or the last
    /// [`reset_peak`](Self::reset_peak).
    pub fn peak_in_use(&self) -> usize {
        self.inner.state().peak
    }

    pub fn reset_peak(&self) {
        let mut st = self.inner.state();
        st.peak = self.inner.capacity - st.stack.len();
    }

    /// Rejected returns (double frees, stale handles) seen so far.
    pub fn violations(&self) -> u64 {
        self.inner.state().violations
    }

    /// Device address of entry `index`.
    pub fn entry_address(&self, index: u32) -> Option<u64> {
        if (index as usize) < self.inner.capacity {
            self.inner
                .region
                .translate(index as usize * self.inner.entry_size)
                .ok()
        } else {
            None
        }
    }

    pub fn alloc(&self) -> Option<PacketBuffer> {
        let mut out = Vec::with_capacity(1);
        self.alloc_batch_into(&mut out, 1);
        out.pop()
    }

    /// Up to `n` buffers; fewer if the pool runs dry.
    pub fn alloc_batch(&self, n: usize) -> Vec<PacketBuffer> {
        let mut out = Vec::with_capacity(n.min(self.inner.capacity));
        self.alloc_batch_into(&mut out, n);
        out
    }

    /// Appends up to `n` buffers to `out` and returns how many were added.
    pub fn alloc_batch_into(&self, out: &mut Vec<PacketBuffer>, n: usize) -> usize {
        let mut taken = Vec::new();
        {
            let mut st = self.inner.state();
            let k = n.min(st.stack.len());
            for _ in 0..k {
                let index = st.stack.pop().expect("counted above");
                let i = index as usize;
                st.free[i] = false;
                st.generation[i] = st.generation[i].wrapping_add(1);
                taken.push((index, st.generation[i]));
            }
            let used = self.inner.capacity - st.stack.len();
            st.peak = st.peak.max(used);
        }
        let k = taken.len();
        out.reserve(k);
        for (index, generation) in taken {
            out.push(carve(&self.inner, index, generation));
        }
        k
    }

    /// Returns a buffer explicitly, reporting misuse.
    ///
    /// A buffer from another pool is rejected with `PoolMismatch` and then
    /// goes back to its own pool when dropped. Forged or replayed handles are
    /// rejected and discarded without touching the free list.
    pub fn free(&self, mut buf: PacketBuffer) -> Result<(), FreeError> {
        if !Arc::ptr_eq(&buf.pool, &self.inner) {
            return Err(FreeError::PoolMismatch {
                expected: self.inner.id,
                found: buf.pool.id,
            });
        }
        buf.returned = true;
        self.inner.give_back(buf.index, buf.generation)
    }

    /// Fabricates a handle for `token` without any custody check. For test
    /// harnesses that replay consumed handles; the handle has no data window.
    #[doc(hidden)]
    pub fn forge(&self, token: BufferToken) -> PacketBuffer {
        PacketBuffer {
            pool: self.inner.clone(),
            index: token.index,
            generation: token.generation,
            device_address: self.entry_address(token.index).unwrap_or(0),
            len: 0,
            window: None,
            returned: false,
        }
    }
}

/// Builds the handle for a freshly allocated slot. The pool's bitmap
/// guarantees at most one live handle per slot, which is what makes the
/// window exclusive.
#[allow(unsafe_code)]
fn carve(pool: &Arc<PoolInner>, index: u32, generation: u32) -> PacketBuffer {
    let offset = index as usize * pool.entry_size;
    // SAFETY: slot `index` was just taken off the free list; no other handle
    // or ring slot refers to it until this buffer is returned.
    let window = unsafe { pool.region.window(offset, pool.entry_size) }.expect("entry inside region");
    PacketBuffer {
        pool: pool.clone(),
        index,
        generation,
        device_address: pool.region.translate(offset).expect("entry inside region"),
        len: pool.entry_size,
        window: Some(window),
        returned: false,
    }
}

/// Exclusive handle to one pool entry.
pub struct PacketBuffer {
    pool: Arc<PoolInner>,
    index: u32,
    generation: u32,
    device_address: u64,
    len: usize,
    window: Option<DmaWindow>,
    returned: bool,
}

impl fmt::Debug for PacketBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PacketBuffer")
            .field("pool", &self.pool.id)
            .field("index", &self.index)
            .field("len", &self.len)
            .finish()
    }
}

impl PacketBuffer {
    pub fn pool_id(&self) -> u64 {
        self.pool.id
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn token(&self) -> BufferToken {
        BufferToken {
            pool: self.pool.id,
            index: self.index,
            generation: self.generation,
        }
    }

    /// Device address of the first data byte.
    pub fn device_address(&self) -> u64 {
        self.device_address
    }

    pub fn entry_size(&self) -> usize {
        self.pool.entry_size
    }

    /// Used length.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set_len(&mut self, len: usize) -> Result<(), BoundsError> {
        let size = self.capacity();
        if len > size {
            return Err(BoundsError { offset: 0, len, size });
        }
        self.len = len;
        Ok(())
    }

    /// Bytes accessible through this handle (0 for forged handles).
    fn capacity(&self) -> usize {
        self.window.as_ref().map_or(0, DmaWindow::len)
    }

    fn range(&self, offset: usize, len: usize) -> Result<std::ops::Range<usize>, BoundsError> {
        let size = self.capacity();
        match offset.checked_add(len) {
            Some(end) if end <= size => Ok(offset..end),
            _ => Err(BoundsError { offset, len, size }),
        }
    }

    /// Writes into the entry; does not change the used length.
    pub fn write(&mut self, offset: usize, data: &[u8]) -> Result<(), BoundsError> {
        let r = self.range(offset, data.len())?;
        self.entry_mut()[r].copy_from_slice(data);
        Ok(())
    }

    pub fn read(&self, offset: usize, len: usize) -> Result<&[u8], BoundsError> {
        let r = self.range(offset, len)?;
        Ok(&self.entry()[r])
    }

    /// The whole entry regardless of used length.
    pub fn entry(&self) -> &[u8] {
        self.window.as_ref().map_or(&[], DmaWindow::as_slice)
    }

    pub fn entry_mut(&mut self) -> &mut [u8] {
        match self.window.as_mut() {
            Some(w) => w.as_mut_slice(),
            None => &mut [],
        }
    }

    pub fn belongs_to(&self, pool: &Mempool) -> bool {
        Arc::ptr_eq(&self.pool, &pool.inner)
    }
}

impl Deref for PacketBuffer {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        let len = self.len;
        &self.entry()[..len]
    }
}

impl DerefMut for PacketBuffer {
    fn deref_mut(&mut self) -> &mut [u8] {
        let len = self.len;
        &mut self.entry_mut()[..len]
    }
}

impl Drop for PacketBuffer {
    fn drop(&mut self) {
        if !self.returned {
            let _ = self.pool.give_back(self.index, self.generation);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DmaBus;

    fn pool(capacity: usize, entry: usize) -> Mempool {
        let bus = DmaBus::new();
        let region = bus.allocate(capacity * entry).unwrap();
        Mempool::new(region, capacity, entry).unwrap()
    }

    #[test]
    fn addresses_are_entry_size_apart() {
        let p = pool(4, 2048);
        let base = p.region().device_address();
        let bufs = p.alloc_batch(4);
        let addrs: Vec<_> = bufs.iter().map(PacketBuffer::device_address).collect();
        assert_eq!(addrs, (0..4).map(|i| base + i * 2048).collect::<Vec<_>>());
        assert_eq!(p.free_count(), 0);
    }

    #[test]
    fn rejects_bad_geometry() {
        let bus = DmaBus::new();
        let r = bus.allocate(4096).unwrap();
        assert!(matches!(
            Mempool::new(r.clone(), 0, 2048),
            Err(MempoolError::ZeroCapacity)
        ));
        assert!(matches!(
            Mempool::new(r.clone(), 4, 100),
            Err(MempoolError::InvalidEntrySize(100))
        ));
        assert!(matches!(
            Mempool::new(r, 4, 2048),
            Err(MempoolError::RegionTooSmall { .. })
        ));
    }

    #[test]
    fn batch_shortfall_and_identity() {
        let p = pool(4, 2048);
        assert!(p.alloc_batch(0).is_empty());
        assert_eq!(p.free_count(), 4);
        let a = p.alloc_batch(2);
        assert_eq!((a.len(), p.free_count()), (2, 2));
        let b = p.alloc_batch(10);
        assert_eq!((b.len(), p.free_count()), (2, 0));
        assert!(a.iter().all(|x| x.len() == 2048));
        drop(a);
        drop(b);
        assert_eq!(p.free_count(), 4);
        assert_eq!(p.peak_in_use(), 4);
    }

    #[test]
    fn lifo_reuse() {
        let p = pool(4, 64);
        let a = p.alloc().unwrap();
        let idx = a.index();
        p.free(a).unwrap();
        assert_eq!(p.alloc().unwrap().index(), idx);
    }

    #[test]
    fn double_free_of_forged_handle() {
        let p = pool(4, 64);
        let a = p.alloc().unwrap();
        let t = a.token();
        p.free(a).unwrap();
        assert_eq!(p.free(p.forge(t)), Err(FreeError::DoubleFree { index: t.index }));
        assert_eq!(p.free_count(), 4);
        assert_eq!(p.violations(), 1);
    }

    #[test]
    fn stale_handle_after_reuse() {
        let p = pool(4, 64);
        let a = p.alloc().unwrap();
        let t = a.token();
        drop(a);
        let b = p.alloc().unwrap();
        assert_eq!(b.index(), t.index);
        assert_eq!(p.free(p.forge(t)), Err(FreeError::StaleHandle { index: t.index }));
        drop(p.forge(t));
        assert_eq!(p.in_use(), 1);
        drop(b);
        assert_eq!(p.in_use(), 0);
    }

    #[test]
    fn wrong_pool_goes_home() {
        let a = pool(2, 64);
        let b = pool(2, 64);
        let buf = a.alloc().unwrap();
        assert!(matches!(b.free(buf), Err(FreeError::PoolMismatch { .. })));
        assert_eq!(a.free_count(), 2);
        assert_eq!(b.free_count(), 2);
    }

    #[test]
    fn bounds_checked_access() {
        let p = pool(1, 64);
        let mut buf = p.alloc().unwrap();
        buf.write(0, &[1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(buf.read(0, 6).unwrap(), &[1, 2, 3, 4, 5, 6]);
        assert!(buf.write(63, &[0, 0]).is_err());
        assert!(buf.read(64, 1).is_err());
        assert!(buf.read(usize::MAX, 2).is_err());
        buf.write(63, &[9]).unwrap();
        assert!(buf.set_len(65).is_err());
        buf.set_len(60).unwrap();
        assert_eq!(buf.len(), 60);
        assert_eq!(&buf[..6], &[1, 2, 3, 4, 5, 6]);
        let mut out = [0u8; 6];
        p.region().read(0, &mut out).unwrap();
        assert_eq!(out, [1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn default_capacity() {
        assert_eq!(default_pool_capacity(512, 32), 1088);
    }
}
