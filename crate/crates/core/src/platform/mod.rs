//! Device discovery, register mapping and DMA allocation.
//!
//! Two backends sit behind [`DeviceHandle`]:
//!
//! * `model` (`model:<n>`): a [`ModelNic`] from the platform's
//!   [`ModelSystem`]. Fully deterministic, used by all tests.
//! * `uio` (`dddd:bb:dd.f`): a real PCIe device whose BAR0 is mapped through
//!   sysfs and whose DMA memory comes from hugepages. Linux only, needs root.
//!
//! This module and its children are the only places in the crate that
//! contain unchecked memory operations.

pub mod dma;
#[cfg(target_os = "linux")]
pub mod uio;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::ixgbe::regs::{BAR0_LEN, MAX_QUEUES};
use crate::mmio::MmioRegion;
use crate::model::{ModelNic, ModelSystem};
use dma::{DmaError, DmaRegion};

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("invalid device spec {0:?}: expected model:<n> or <domain>:<bus>:<dev>.<fn>")]
    InvalidSpec(String),
    #[error("device {0} not found")]
    NotFound(String),
    #[error("device {0} is already open")]
    AlreadyOpen(String),
    #[error("permission denied on {path} (the uio backend needs root)")]
    PermissionDenied { path: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("backend {0:?} is not supported")]
    Unsupported(BackendKind),
    #[error(transparent)]
    Dma(#[from] DmaError),
    #[error("hugepages unavailable in {dir}: {reason}; mount hugetlbfs there or set NICDRV_HUGEPAGE_DIR")]
    HugepagesUnavailable { dir: String, reason: String },
    #[error("virtual to physical translation unavailable (run as root with /proc/self/pagemap readable)")]
    TranslationUnavailable,
    #[error("contiguous DMA request of {bytes} bytes exceeds one {max}-byte hugepage")]
    ContiguousTooLarge { bytes: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendKind {
    Model,
    Uio,
    /// Reserved for an IOMMU-backed implementation.
    Vfio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PciAddress {
    pub domain: u16,
    pub bus: u8,
    pub device: u8,
    pub function: u8,
}

impl fmt::Display for PciAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04x}:{:02x}:{:02x}.{:x}",
            self.domain, self.bus, self.device, self.function
        )
    }
}

impl FromStr for PciAddress {
    type Err = PlatformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PlatformError::InvalidSpec(s.to_owned());
        let (domain, rest) = s.split_once(':').ok_or_else(bad)?;
        let (bus, rest) = rest.split_once(':').ok_or_else(bad)?;
        let (device, function) = rest.split_once('.').ok_or_else(bad)?;
        let hex = |t: &str, width: usize| {
            if t.len() == width && t.bytes().all(|b| b.is_ascii_hexdigit()) {
                u32::from_str_radix(t, 16).map_err(|_| bad())
            } else {
                Err(bad())
            }
        };
        let addr = PciAddress {
            domain: hex(domain, 4)? as u16,
            bus: hex(bus, 2)? as u8,
            device: hex(device, 2)? as u8,
            function: hex(function, 1)? as u8,
        };
        if addr.device > 0x1f || addr.function > 7 {
            return Err(bad());
        }
        Ok(addr)
    }
}

/// Parsed form of a device spec string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceSpec {
    Model(usize),
    Pci(PciAddress),
}

impl fmt::Display for DeviceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceSpec::Model(n) => write!(f, "model:{n}"),
            DeviceSpec::Pci(a) => a.fmt(f),
        }
    }
}

impl FromStr for DeviceSpec {
    type Err = PlatformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("model:") {
            if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
                return Err(PlatformError::InvalidSpec(s.to_owned()));
            }
            return n
                .parse()
                .map(DeviceSpec::Model)
                .map_err(|_| PlatformError::InvalidSpec(s.to_owned()));
        }
        s.parse().map(DeviceSpec::Pci)
    }
}

impl DeviceSpec {
    pub fn backend(&self) -> BackendKind {
        match self {
            DeviceSpec::Model(_) => BackendKind::Model,
            DeviceSpec::Pci(_) => BackendKind::Uio,
        }
    }
}

type OpenSet = Arc<Mutex<HashSet<DeviceSpec>>>;

/// Entry point for opening devices. Cloning shares the open-device table.
#[derive(Clone, Default)]
pub struct Platform {
    models: Option<ModelSystem>,
    open: OpenSet,
}

impl fmt::Debug for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Platform")
            .field("models", &self.models)
            .finish_non_exhaustive()
    }
}

impl Platform {
    /// A platform with no model devices (hardware only).
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_models(models: ModelSystem) -> Self {
        Self {
            models: Some(models),
            open: OpenSet::default(),
        }
    }

    pub fn models(&self) -> Option<&ModelSystem> {
        self.models.as_ref()
    }

    pub fn open_device(&self, spec: &str) -> Result<DeviceHandle, PlatformError> {
        self.open(spec.parse()?)
    }

    pub fn open(&self, spec: DeviceSpec) -> Result<DeviceHandle, PlatformError> {
        let backend = match spec {
            DeviceSpec::Model(n) => {
                let nic = self
                    .models
                    .as_ref()
                    .and_then(|m| m.nic(n))
                    .ok_or_else(|| PlatformError::NotFound(spec.to_string()))?
                    .clone();
                HandleBackend::Model(nic)
            }
            #[cfg(target_os = "linux")]
            DeviceSpec::Pci(addr) => HandleBackend::Uio(uio::UioDevice::probe(&addr)?),
            #[cfg(not(target_os = "linux"))]
            DeviceSpec::Pci(_) => return Err(PlatformError::Unsupported(BackendKind::Uio)),
        };
        if !self.open.lock().unwrap_or_else(|e| e.into_inner()).insert(spec) {
            return Err(PlatformError::AlreadyOpen(spec.to_string()));
        }
        let registers = match &backend {
            HandleBackend::Model(nic) => {
                nic.set_bus_master(false);
                MmioRegion::new(Arc::new(nic.clone()), BAR0_LEN)
            }
            #[cfg(target_os = "linux")]
            HandleBackend::Uio(dev) => match dev.map_registers() {
                Ok(r) => r,
                Err(e) => {
                    self.open.lock().unwrap_or_else(|e| e.into_inner()).remove(&spec);
                    return Err(e);
                }
            },
        };
        Ok(DeviceHandle {
            inner: Arc::new(HandleInner {
                spec,
                backend,
                registers,
                open: self.open.clone(),
                claimed: AtomicBool::new(false),
            }),
        })
    }
}

enum HandleBackend {
    Model(ModelNic),
    #[cfg(target_os = "linux")]
    Uio(uio::UioDevice),
}

struct HandleInner {
    spec: DeviceSpec,
    backend: HandleBackend,
    registers: MmioRegion,
    open: OpenSet,
    claimed: AtomicBool,
}

impl Drop for HandleInner {
    fn drop(&mut self) {
        self.open
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&self.spec);
    }
}

/// An open device. The device stays open until the last clone is dropped.
#[derive(Clone)]
pub struct DeviceHandle {
    inner: Arc<HandleInner>,
}

impl fmt::Debug for DeviceHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviceHandle")
            .field("spec", &self.inner.spec)
            .finish_non_exhaustive()
    }
}

impl DeviceHandle {
    pub fn spec(&self) -> DeviceSpec {
        self.inner.spec
    }

    pub fn backend(&self) -> BackendKind {
        self.inner.spec.backend()
    }

    pub fn registers(&self) -> &MmioRegion {
        &self.inner.registers
    }

    pub fn model(&self) -> Option<&ModelNic> {
        match &self.inner.backend {
            HandleBackend::Model(nic) => Some(nic),
            #[cfg(target_os = "linux")]
            HandleBackend::Uio(_) => None,
        }
    }

    /// Allocates pinned memory visible to this device.
    pub fn allocate_dma(&self, bytes: usize, require_contiguous: bool) -> Result<DmaRegion, PlatformError> {
        if bytes == 0 {
            return Err(DmaError::ZeroLength.into());
        }
        match &self.inner.backend {
            HandleBackend::Model(nic) => Ok(nic.bus().allocate(bytes)?),
            #[cfg(target_os = "linux")]
            HandleBackend::Uio(_) => uio::allocate_hugepages(bytes, require_contiguous),
        }
    }

    /// Lets the device master the bus (issue DMA).
    pub fn enable_bus_master(&self) -> Result<(), PlatformError> {
        match &self.inner.backend {
            HandleBackend::Model(nic) => {
                nic.set_bus_master(true);
                Ok(())
            }
            #[cfg(target_os = "linux")]
            HandleBackend::Uio(dev) => dev.enable_bus_master(),
        }
    }

    /// How long to wait after issuing a device reset.
    pub fn reset_settle(&self) -> Duration {
        match self.backend() {
            BackendKind::Model => Duration::ZERO,
            _ => Duration::from_millis(10),
        }
    }

    /// Queues available per direction.
    pub fn max_queues(&self) -> usize {
        match self.backend() {
            BackendKind::Model => 1,
            _ => MAX_QUEUES,
        }
    }

    /// Marks the device as taken by a driver. Returns false if it already was.
    pub fn claim_for_driver(&self) -> bool {
        !self.inner.claimed.swap(true, Ordering::AcqRel)
    }
}
