//! Pinned DMA memory and its device-address translation.
//!
//! A [`DmaRegion`] owns a block of memory that a device may read and write
//! behind the CPU's back. All pointer arithmetic on that memory happens in
//! this file; callers get bounds-checked accessors:
//!
//! * byte copies ([`DmaRegion::read`], [`DmaRegion::write`]) for packet data,
//! * 32/64-bit atomic loads and stores for words shared with the device
//!   (descriptor fields), so that status written by the device is observed
//!   with acquire/release ordering,
//! * exclusive [`DmaWindow`]s that hand out ordinary slices to the owner of a
//!   packet buffer.

use std::alloc::{self, Layout};
use std::ptr::NonNull;
use std::slice;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Weak};

use thiserror::Error;

/// Granularity of model-backend allocations.
pub const PAGE_SIZE: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DmaError {
    #[error("access of {len} bytes at offset {offset:#x} exceeds DMA region of {region_len} bytes")]
    OutOfBounds {
        offset: usize,
        len: usize,
        region_len: usize,
    },
    #[error("offset {offset:#x} is not aligned to {align} bytes")]
    Misaligned { offset: usize, align: usize },
    #[error("cannot allocate a zero-length DMA region")]
    ZeroLength,
    #[error("failed to allocate {bytes} bytes of DMA memory")]
    OutOfMemory { bytes: usize },
}

/// Virtual offset to device address mapping of one region.
#[derive(Debug, Clone)]
pub(crate) enum Translation {
    /// Device address = base + offset.
    Linear { base: u64 },
    /// One device address per page.
    Paged { page_size: usize, pages: Vec<u64> },
}

enum Backing {
    Heap(Layout),
    #[cfg(target_os = "linux")]
    Mapped,
}

struct RegionInner {
    ptr: NonNull<u8>,
    len: usize,
    mapped_len: usize,
    translation: Translation,
    backing: Backing,
}

// SAFETY: the memory is owned by the region and only reachable through the
// accessors below, which use atomics for words shared with the device and
// require exclusive custody for slice windows.
unsafe impl Send for RegionInner {}
unsafe impl Sync for RegionInner {}

impl Drop for RegionInner {
    fn drop(&mut self) {
        match self.backing {
            // SAFETY: allocated in `DmaRegion::heap` with exactly this layout.
            Backing::Heap(layout) => unsafe { alloc::dealloc(self.ptr.as_ptr(), layout) },
            #[cfg(target_os = "linux")]
            Backing::Mapped => {
                // SAFETY: mapping created by the uio backend with `mapped_len`.
                unsafe {
                    libc::munmap(self.ptr.as_ptr().cast(), self.mapped_len);
                }
            }
        }
    }
}

/// A pinned, device-visible memory region. Cloning shares the same memory.
#[derive(Clone)]
pub struct DmaRegion {
    inner: Arc<RegionInner>,
}

/// Non-owning reference to a region; used by the device model's address map
/// so that freeing driver memory turns later device accesses into faults.
#[derive(Clone)]
pub struct WeakDmaRegion(Weak<RegionInner>);

impl WeakDmaRegion {
    pub fn upgrade(&self) -> Option<DmaRegion> {
        self.0.upgrade().map(|inner| DmaRegion { inner })
    }
}

impl std::fmt::Debug for DmaRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DmaRegion")
            .field("len", &self.inner.len)
            .field("device_address", &format_args!("{:#x}", self.device_address()))
            .finish()
    }
}

impl DmaRegion {
    /// Zeroed, page-aligned heap memory with the given translation.
    pub(crate) fn heap(len: usize, translation: Translation) -> Result<Self, DmaError> {
        if len == 0 {
            return Err(DmaError::ZeroLength);
        }
        let mapped_len = len
            .checked_next_multiple_of(PAGE_SIZE)
            .ok_or(DmaError::OutOfMemory { bytes: len })?;
        let layout = Layout::from_size_align(mapped_len, PAGE_SIZE)
            .map_err(|_| DmaError::OutOfMemory { bytes: len })?;
        // SAFETY: layout has non-zero size.
        let raw = unsafe { alloc::alloc_zeroed(layout) };
        let ptr = NonNull::new(raw).ok_or(DmaError::OutOfMemory { bytes: len })?;
        Ok(Self {
            inner: Arc::new(RegionInner {
                ptr,
                len,
                mapped_len,
                translation,
                backing: Backing::Heap(layout),
            }),
        })
    }

    /// Takes ownership of an existing `mmap`ed area.
    ///
    /// # Safety
    ///
    /// `ptr` must point to a private, writable mapping of `mapped_len` bytes
    /// (`len <= mapped_len`) that stays valid until `munmap`.
    #[cfg(target_os = "linux")]
    pub(crate) unsafe fn from_mapping(
        ptr: NonNull<u8>,
        len: usize,
        mapped_len: usize,
        translation: Translation,
    ) -> Self {
        Self {
            inner: Arc::new(RegionInner {
                ptr,
                len,
                mapped_len,
                translation,
                backing: Backing::Mapped,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    /// Device address of the first byte.
    pub fn device_address(&self) -> u64 {
        match &self.inner.translation {
            Translation::Linear { base } => *base,
            Translation::Paged { pages, .. } => pages[0],
        }
    }

    /// Device address of the byte at `offset`.
    pub fn translate(&self, offset: usize) -> Result<u64, DmaError> {
        if offset >= self.inner.len {
            return Err(DmaError::OutOfBounds {
                offset,
                len: 1,
                region_len: self.inner.len,
            });
        }
        Ok(match &self.inner.translation {
            Translation::Linear { base } => base + offset as u64,
            Translation::Paged { page_size, pages } => {
                pages[offset / page_size] + (offset % page_size) as u64
            }
        })
    }

    /// Translation granularity when the region is not physically contiguous.
    pub fn page_size(&self) -> Option<usize> {
        match &self.inner.translation {
            Translation::Linear { .. } => None,
            Translation::Paged { page_size, .. } => Some(*page_size),
        }
    }

    pub fn same_region(&self, other: &DmaRegion) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn downgrade(&self) -> WeakDmaRegion {
        WeakDmaRegion(Arc::downgrade(&self.inner))
    }

    fn check(&self, offset: usize, len: usize, align: usize) -> Result<(), DmaError> {
        let end = offset.checked_add(len);
        if !matches!(end, Some(e) if e <= self.inner.len) {
            return Err(DmaError::OutOfBounds {
                offset,
                len,
                region_len: self.inner.len,
            });
        }
        if offset % align != 0 {
            return Err(DmaError::Misaligned { offset, align });
        }
        Ok(())
    }

    pub fn read(&self, offset: usize, buf: &mut [u8]) -> Result<(), DmaError> {
        self.check(offset, buf.len(), 1)?;
        // SAFETY: bounds checked above; the source lies inside the allocation.
        unsafe {
            std::ptr::copy_nonoverlapping(self.inner.ptr.as_ptr().add(offset), buf.as_mut_ptr(), buf.len());
        }
        Ok(())
    }

    pub fn write(&self, offset: usize, data: &[u8]) -> Result<(), DmaError> {
        self.check(offset, data.len(), 1)?;
        // SAFETY: bounds checked above; the destination lies inside the allocation.
        unsafe {
            std::ptr::copy_nonoverlapping(data.as_ptr(), self.inner.ptr.as_ptr().add(offset), data.len());
        }
        Ok(())
    }

    pub fn fill(&self, offset: usize, len: usize, byte: u8) -> Result<(), DmaError> {
        self.check(offset, len, 1)?;
        // SAFETY: bounds checked above.
        unsafe { std::ptr::write_bytes(self.inner.ptr.as_ptr().add(offset), byte, len) };
        Ok(())
    }

    fn atomic_u32(&self, offset: usize) -> Result<&AtomicU32, DmaError> {
        self.check(offset, 4, 4)?;
        // SAFETY: in bounds, 4-byte aligned (base is page aligned), and the
        // memory lives as long as `self`.
        Ok(unsafe { &*(self.inner.ptr.as_ptr().add(offset) as *const AtomicU32) })
    }

    fn atomic_u64(&self, offset: usize) -> Result<&AtomicU64, DmaError> {
        self.check(offset, 8, 8)?;
        // SAFETY: in bounds, 8-byte aligned (base is page aligned), and the
        // memory lives as long as `self`.
        Ok(unsafe { &*(self.inner.ptr.as_ptr().add(offset) as *const AtomicU64) })
    }

    pub fn load_u32(&self, offset: usize, order: Ordering) -> Result<u32, DmaError> {
        Ok(self.atomic_u32(offset)?.load(order))
    }

    pub fn store_u32(&self, offset: usize, value: u32, order: Ordering) -> Result<(), DmaError> {
        self.atomic_u32(offset)?.store(value, order);
        Ok(())
    }

    pub fn load_u64(&self, offset: usize, order: Ordering) -> Result<u64, DmaError> {
        Ok(self.atomic_u64(offset)?.load(order))
    }

    pub fn store_u64(&self, offset: usize, value: u64, order: Ordering) -> Result<(), DmaError> {
        self.atomic_u64(offset)?.store(value, order);
        Ok(())
    }

    /// Carves out a byte window that can be viewed as an ordinary slice.
    ///
    /// # Safety
    ///
    /// At most one window may exist per byte range, and while a slice
    /// borrowed from it is alive nobody else (the device, the byte-copy
    /// accessors) may touch `offset..offset + len`.
    pub unsafe fn window(&self, offset: usize, len: usize) -> Result<DmaWindow, DmaError> {
        self.check(offset, len, 1)?;
        Ok(DmaWindow {
            // SAFETY: offset is in bounds of a non-null allocation.
            ptr: NonNull::new_unchecked(self.inner.ptr.as_ptr().add(offset)),
            len,
            _region: self.clone(),
        })
    }
}

/// Exclusive byte window into a [`DmaRegion`].
pub struct DmaWindow {
    ptr: NonNull<u8>,
    len: usize,
    _region: DmaRegion,
}

// SAFETY: the window is an exclusive view (see `DmaRegion::window`) that keeps
// its region alive; moving it between threads moves the exclusivity with it.
unsafe impl Send for DmaWindow {}
unsafe impl Sync for DmaWindow {}

impl DmaWindow {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[u8] {
        // SAFETY: ptr/len were bounds checked at creation and the region is
        // kept alive by `_region`; exclusivity is the creator's contract.
        unsafe { slice::from_raw_parts(self.ptr.as_ptr(), self.len) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        // SAFETY: as above, and `&mut self` rules out aliasing through this window.
        unsafe { slice::from_raw_parts_mut(self.ptr.as_ptr(), self.len) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(len: usize) -> DmaRegion {
        DmaRegion::heap(len, Translation::Linear { base: 7 << 32 }).unwrap()
    }

    #[test]
    fn zero_length_rejected() {
        assert_eq!(
            DmaRegion::heap(0, Translation::Linear { base: 0 }).unwrap_err(),
            DmaError::ZeroLength
        );
    }

    #[test]
    fn heap_memory_starts_zeroed() {
        let r = region(100);
        let mut buf = [0xffu8; 100];
        r.read(0, &mut buf).unwrap();
        assert!(buf.iter().all(|&b| b == 0));
    }

    #[test]
    fn linear_translation() {
        let r = region(2 * PAGE_SIZE);
        assert_eq!(r.translate(0).unwrap(), 7 << 32);
        assert_eq!(r.translate(PAGE_SIZE).unwrap(), (7 << 32) + PAGE_SIZE as u64);
        assert!(r.translate(2 * PAGE_SIZE).is_err());
    }

    #[test]
    fn paged_translation() {
        let r = DmaRegion::heap(
            3 * PAGE_SIZE,
            Translation::Paged {
                page_size: PAGE_SIZE,
                pages: vec![0x9000, 0x3000, 0x5000],
            },
        )
        .unwrap();
        assert_eq!(r.translate(0).unwrap(), 0x9000);
        assert_eq!(r.translate(PAGE_SIZE + 5).unwrap(), 0x3005);
        assert_eq!(r.translate(3 * PAGE_SIZE - 1).unwrap(), 0x5fff);
        assert_eq!(r.page_size(), Some(PAGE_SIZE));
    }

    #[test]
    fn word_access_checks_alignment_and_bounds() {
        let r = region(64);
        r.store_u64(8, 0xdead_beef_0000_0001, Ordering::Release).unwrap();
        assert_eq!(r.load_u64(8, Ordering::Acquire).unwrap(), 0xdead_beef_0000_0001);
        assert_eq!(r.load_u32(8, Ordering::Relaxed).unwrap(), 1);
        assert_eq!(
            r.load_u64(4, Ordering::Relaxed).unwrap_err(),
            DmaError::Misaligned { offset: 4, align: 8 }
        );
        assert!(matches!(
            r.load_u64(64, Ordering::Relaxed),
            Err(DmaError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn byte_copies_round_trip() {
        let r = region(32);
        r.write(10, b"hello").unwrap();
        let mut out = [0u8; 5];
        r.read(10, &mut out).unwrap();
        assert_eq!(&out, b"hello");
        assert!(r.write(30, b"abc").is_err());
        assert!(r.write(usize::MAX, b"a").is_err());
    }

    #[test]
    fn window_sees_region_bytes() {
        let r = region(128);
        r.write(64, &[1, 2, 3]).unwrap();
        // SAFETY: nothing else touches the region in this test.
        let mut w = unsafe { r.window(64, 64).unwrap() };
        assert_eq!(&w.as_slice()[..3], &[1, 2, 3]);
        w.as_mut_slice()[3] = 9;
        drop(w);
        let mut b = [0u8; 1];
        r.read(67, &mut b).unwrap();
        assert_eq!(b[0], 9);
    }

    #[test]
    fn weak_reference_expires_with_region() {
        let r = region(16);
        let weak = r.downgrade();
        assert!(weak.upgrade().is_some());
        drop(r);
        assert!(weak.upgrade().is_none());
    }
}
