//! Real-hardware backend over sysfs (Linux, root only).
//!
//! Paths used:
//!
//! * `/sys/bus/pci/devices/<addr>/driver/unbind`: detach the kernel driver.
//! * `/sys/bus/pci/devices/<addr>/config`: set the bus-master bit (command
//!   register, offset 4, bit 2).
//! * `/sys/bus/pci/devices/<addr>/resource0`: BAR0, mapped for registers.
//! * `$NICDRV_HUGEPAGE_DIR` (default `/mnt/huge`): a hugetlbfs mount used for
//!   DMA memory, 2 MiB pages.
//! * `/proc/self/pagemap`: virtual to physical translation.
//!
//! Translating through the page map assumes the kernel never migrates the
//! locked hugepages. That holds on current kernels but is not a documented
//! guarantee, and without an IOMMU the device can DMA anywhere.

use std::fs::{self, File, OpenOptions};
use std::io;
use std::os::unix::fs::FileExt;
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};
use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use log::info;

use super::dma::{DmaRegion, Translation};
use super::{PciAddress, PlatformError};
use crate::mmio::{MmioRegion, RegisterBackend};

pub const HUGEPAGE_SIZE: usize = 2 * 1024 * 1024;
pub const HUGEPAGE_DIR_ENV: &str = "NICDRV_HUGEPAGE_DIR";
const DEFAULT_HUGEPAGE_DIR: &str = "/mnt/huge";
const SYSFS_PCI: &str = "/sys/bus/pci/devices";

fn io_err(context: impl Into<String>, path: &Path, e: io::Error) -> PlatformError {
    if e.kind() == io::ErrorKind::PermissionDenied {
        PlatformError::PermissionDenied {
            path: path.display().to_string(),
        }
    } else {
        PlatformError::Io {
            context: format!("{} ({})", context.into(), path.display()),
            source: e,
        }
    }
}

pub(crate) struct UioDevice {
    sysfs: PathBuf,
    address: String,
}

impl UioDevice {
    pub(crate) fn probe(addr: &PciAddress) -> Result<Self, PlatformError> {
        let address = addr.to_string();
        let sysfs = Path::new(SYSFS_PCI).join(&address);
        if !sysfs.exists() {
            return Err(PlatformError::NotFound(address));
        }
        Ok(Self { sysfs, address })
    }

    fn unbind(&self) -> Result<(), PlatformError> {
        let path = self.sysfs.join("driver/unbind");
        if !path.exists() {
            return Ok(());
        }
        info!("unbinding kernel driver from {}", self.address);
        fs::write(&path, &self.address).map_err(|e| io_err("unbind driver", &path, e))
    }

    pub(crate) fn enable_bus_master(&self) -> Result<(), PlatformError> {
        let path = self.sysfs.join("config");
        let f = OpenOptions::new()
            .read(true)
            .write(true)
            .open(&path)
            .map_err(|e| io_err("open config space", &path, e))?;
        let mut cmd = [0u8; 2];
        f.read_exact_at(&mut cmd, 4)
            .map_err(|e| io_err("read command register", &path, e))?;
        let v = u16::from_le_bytes(cmd) | 1 << 2;
        f.write_all_at(&v.to_le_bytes(), 4)
            .map_err(|e| io_err("write command register", &path, e))
    }

    pub(crate) fn map_registers(&self) -> Result<MmioRegion, PlatformError> {
        self.unbind()?;
        let path = self.sysfs.join("resource0");
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(&path)
            .map_err(|e| io_err("open BAR0", &path, e))?;
        let len = file.metadata().map_err(|e| io_err("stat BAR0", &path, e))?.len() as usize;
        // SAFETY: mapping a file we hold open; the result is checked.
        let raw = unsafe {
            libc::mmap(
                ptr::null_mut(),
                len,
                libc::PROT_READ | libc::PROT_WRITE,
                libc::MAP_SHARED,
                file.as_raw_fd(),
                0,
            )
        };
        if raw == libc::MAP_FAILED {
            return Err(io_err("mmap BAR0", &path, io::Error::last_os_error()));
        }
        let bar = MappedBar {
            ptr: NonNull::new(raw.cast()).expect("mmap returned null"),
            len,
        };
        Ok(MmioRegion::new(Arc::new(bar), len))
    }
}

/// BAR0 mapped into the process.
struct MappedBar {
    ptr: NonNull<u8>,
    len: usize,
}

// SAFETY: device registers are accessed only with 32-bit volatile operations,
// which the device serialises.
unsafe impl Send for MappedBar {}
unsafe impl Sync for MappedBar {}

impl RegisterBackend for MappedBar {
    fn read32(&self, offset: u32) -> u32 {
        debug_assert!(offset as usize + 4 <= self.len);
        // SAFETY: MmioRegion checked bounds and alignment.
        unsafe { ptr::read_volatile(self.ptr.as_ptr().add(offset as usize).cast::<u32>()) }
    }

    fn write32(&self, offset: u32, value: u32) {
        debug_assert!(offset as usize + 4 <= self.len);
        // SAFETY: as above.
        unsafe { ptr::write_volatile(self.ptr.as_ptr().add(offset as usize).cast::<u32>(), value) }
    }
}

impl Drop for MappedBar {
    fn drop(&mut self) {
        // SAFETY: unmapping the area mapped in `map_registers`.
        unsafe {
            libc::munmap(self.ptr.as_ptr().cast(), self.len);
        }
    }
}

fn hugepage_dir() -> PathBuf {
    std::env::var_os(HUGEPAGE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_HUGEPAGE_DIR))
}

fn virt_to_phys(pagemap: &File, virt: usize) -> Result<u64, PlatformError> {
    let page = 4096usize;
    let mut entry = [0u8; 8];
    pagemap
        .read_exact_at(&mut entry, (virt / page * 8) as u64)
        .map_err(|_| PlatformError::TranslationUnavailable)?;
    let pfn = u64::from_le_bytes(entry) & ((1 << 55) - 1);
    if pfn == 0 {
        return Err(PlatformError::TranslationUnavailable);
    }
    Ok(pfn * page as u64 + (virt % page) as u64)
}

/// Pinned hugepage memory with a per-page physical translation.
pub(crate) fn allocate_hugepages(bytes: usize, contiguous: bool) -> Result<DmaRegion, PlatformError> {
    static SEQ: AtomicUsize = AtomicUsize::new(0);
    if contiguous && bytes > HUGEPAGE_SIZE {
        return Err(PlatformError::ContiguousTooLarge {
            bytes,
            max: HUGEPAGE_SIZE,
        });
    }
    let mapped_len = bytes
        .checked_next_multiple_of(HUGEPAGE_SIZE)
        .ok_or(PlatformError::Dma(super::dma::DmaError::OutOfMemory { bytes }))?;
    let dir = hugepage_dir();
    let unavailable = |reason: String| PlatformError::HugepagesUnavailable {
        dir: dir.display().to_string(),
        reason,
    };
    let path = dir.join(format!(
        "nicdrv-{}-{}",
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    let file = OpenOptions::new()
        .read(true)
        .write(true)
        .create_new(true)
        .open(&path)
        .map_err(|e| unavailable(e.to_string()))?;
    let sized = file.set_len(mapped_len as u64);
    // The mapping outlives the name.
    let _ = fs::remove_file(&path);
    sized.map_err(|e| unavailable(e.to_string()))?;
    // SAFETY: fresh shared mapping of a file we own; result checked below.
    let raw = unsafe {
        libc::mmap(
            ptr::null_mut(),
            mapped_len,
            libc::PROT_READ | libc::PROT_WRITE,
            libc::MAP_SHARED | libc::MAP_HUGETLB,
            file.as_raw_fd(),
            0,
        )
    };
    if raw == libc::MAP_FAILED {
        return Err(unavailable(io::Error::last_os_error().to_string()));
    }
    let ptr = NonNull::new(raw.cast::<u8>()).expect("mmap returned null");
    let unmap = || {
        // SAFETY: undoing the mapping made just above.
        unsafe {
            libc::munmap(raw, mapped_len);
        }
    };
    // SAFETY: locking our own mapping.
    if unsafe { libc::mlock(raw, mapped_len) } != 0 {
        let e = io::Error::last_os_error();
        unmap();
        return Err(unavailable(format!("mlock: {e}")));
    }
    let pages = File::open("/proc/self/pagemap")
        .map_err(|_| PlatformError::TranslationUnavailable)
        .and_then(|pm| {
            (0..mapped_len / HUGEPAGE_SIZE)
                .map(|i| virt_to_phys(&pm, ptr.as_ptr() as usize + i * HUGEPAGE_SIZE))
                .collect::<Result<Vec<_>, _>>()
        });
    let pages = match pages {
        Ok(p) => p,
        Err(e) => {
            unmap();
            return Err(e);
        }
    };
    let translation = Translation::Paged {
        page_size: HUGEPAGE_SIZE,
        pages,
    };
    // SAFETY: `ptr` is a private-to-us, locked, writable mapping of
    // `mapped_len >= bytes` bytes; ownership passes to the region.
    Ok(unsafe { DmaRegion::from_mapping(ptr, bytes, mapped_len, translation) })
}
