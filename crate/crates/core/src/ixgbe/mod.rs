//! Poll-mode driver for the Intel 82599 (ixgbe) family.
//!
//! The same code drives a real device through the uio backend and a
//! [`ModelNic`](crate::model::ModelNic) through the model backend; it only
//! ever talks to the device through an [`MmioRegion`] and descriptor rings in
//! [`DmaRegion`]s.
//!
//! Ring discipline: the device owns descriptors from head up to, but not
//! including, tail. One slot always stays with the driver so `head == tail`
//! means "device owns nothing". Every rx slot holds a buffer at all times;
//! a consumed buffer is replaced before the slot is handed back.

pub mod desc;
mod queue;
pub mod regs;

use std::ops::AddAssign;
use std::time::Duration;

use log::{debug, info};
use thiserror::Error;

use crate::memory::{default_pool_capacity, Mempool, MempoolError, PacketBuffer, DEFAULT_ENTRY_SIZE};
use crate::mmio::{MmioError, MmioRegion};
use crate::platform::dma::DmaRegion;
use crate::platform::{DeviceHandle, PlatformError};
use desc::DESC_SIZE;
use queue::{RxQueue, TxQueue};
use regs::*;

pub use queue::TX_CLEAN_BATCH;

pub const DEFAULT_RING_SIZE: usize = 512;
pub const DEFAULT_BATCH: usize = 32;
pub const MIN_RING_SIZE: usize = 64;
pub const MAX_RING_SIZE: usize = 4096;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("device is already initialized")]
    AlreadyInitialized,
    #[error("{requested} queues requested, device has {max}")]
    TooManyQueues { requested: usize, max: usize },
    #[error("pool of {capacity} buffers cannot fill a ring of {needed}")]
    PoolTooSmall { capacity: usize, needed: usize },
    #[error("no queue {queue}")]
    NoSuchQueue { queue: usize },
    #[error("buffer {index} has length {len}, expected {min}..={max}")]
    InvalidLength {
        index: usize,
        len: usize,
        min: usize,
        max: usize,
    },
    #[error("queue {queue} received a multi-descriptor packet")]
    MultiSegment { queue: usize },
    #[error("queue {queue} write-back length {len} exceeds the buffer")]
    BadDescriptor { queue: usize, len: u16 },
    #[error("timed out during {stage}: {source}")]
    Timeout {
        stage: &'static str,
        #[source]
        source: MmioError,
    },
    #[error(transparent)]
    Mmio(#[from] MmioError),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Mempool(#[from] MempoolError),
}

#[derive(Debug, Clone)]
pub struct DriverConfig {
    pub num_rx_queues: usize,
    pub num_tx_queues: usize,
    /// Descriptors per ring; a power of two in 64..=4096.
    pub ring_size: usize,
    /// Largest batch the application will request; sizes the default pool.
    pub max_batch: usize,
    /// Buffers per rx queue pool. `None` = `2 * ring_size + 2 * max_batch`.
    pub pool_capacity: Option<usize>,
    pub entry_size: usize,
    pub promisc: bool,
    pub reset_timeout: Duration,
    pub link_timeout: Duration,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            num_rx_queues: 1,
            num_tx_queues: 1,
            ring_size: DEFAULT_RING_SIZE,
            max_batch: DEFAULT_BATCH,
            pool_capacity: None,
            entry_size: DEFAULT_ENTRY_SIZE,
            promisc: true,
            reset_timeout: Duration::from_secs(1),
            link_timeout: Duration::from_secs(10),
        }
    }
}

impl DriverConfig {
    pub fn pool_capacity(&self) -> usize {
        self.pool_capacity
            .unwrap_or_else(|| default_pool_capacity(self.ring_size, self.max_batch))
    }

    fn validate(&self, max_queues: usize) -> Result<(), DriverError> {
        let r = self.ring_size;
        if !r.is_power_of_two() || !(MIN_RING_SIZE..=MAX_RING_SIZE).contains(&r) {
            return Err(DriverError::Config(format!(
                "ring size {r} must be a power of two in {MIN_RING_SIZE}..={MAX_RING_SIZE}"
            )));
        }
        for n in [self.num_rx_queues, self.num_tx_queues] {
            if n == 0 {
                return Err(DriverError::Config(
                    "need at least one queue per direction".into(),
                ));
            }
            if n > max_queues {
                return Err(DriverError::TooManyQueues {
                    requested: n,
                    max: max_queues,
                });
            }
        }
        if self.pool_capacity() < r {
            return Err(DriverError::PoolTooSmall {
                capacity: self.pool_capacity(),
                needed: r,
            });
        }
        Ok(())
    }
}

/// Counters since the previous read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeviceStats {
    pub rx_packets: u64,
    pub tx_packets: u64,
    pub rx_bytes: u64,
    pub tx_bytes: u64,
    /// Frames the device dropped because the rx ring was full.
    pub rx_missed: u64,
}

impl AddAssign for DeviceStats {
    fn add_assign(&mut self, o: Self) {
        self.rx_packets += o.rx_packets;
        self.tx_packets += o.tx_packets;
        self.rx_bytes += o.rx_bytes;
        self.tx_bytes += o.tx_bytes;
        self.rx_missed += o.rx_missed;
    }
}

/// Link speed in Mbit/s from a LINKS register value, 0 if down.
pub fn decode_link_speed(links: u32) -> u32 {
    if links & LINKS_UP == 0 {
        return 0;
    }
    match links & LINKS_SPEED_82599 {
        LINKS_SPEED_10G_82599 => 10_000,
        LINKS_SPEED_1G_82599 => 1_000,
        LINKS_SPEED_100_82599 => 100,
        _ => 0,
    }
}

/// Batched packet I/O, the interface applications program against.
pub trait NetDevice {
    /// Appends up to `max` received packets to `out`; returns how many.
    fn rx_batch(
        &mut self,
        queue: usize,
        out: &mut Vec<PacketBuffer>,
        max: usize,
    ) -> Result<usize, DriverError>;
    /// Queues packets for transmission, taking them from the front of
    /// `bufs`. Packets that did not fit stay in `bufs`.
    fn tx_batch(&mut self, queue: usize, bufs: &mut Vec<PacketBuffer>) -> Result<usize, DriverError>;
    fn read_stats(&mut self) -> Result<DeviceStats, DriverError>;
    fn reset_stats(&mut self) -> Result<(), DriverError>;
    fn set_promisc(&mut self, on: bool) -> Result<(), DriverError>;
    /// Link speed in Mbit/s, 0 if the link is down.
    fn link_speed(&self) -> Result<u32, DriverError>;
}

pub struct IxgbeDevice {
    handle: DeviceHandle,
    regs: MmioRegion,
    config: DriverConfig,
    rx: Vec<RxQueue>,
    tx: Vec<TxQueue>,
}

impl std::fmt::Debug for IxgbeDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IxgbeDevice")
            .field("device", &self.handle.spec())
            .field("rx_queues", &self.rx.len())
            .field("tx_queues", &self.tx.len())
            .finish()
    }
}

fn timeout(stage: &'static str) -> impl FnOnce(MmioError) -> DriverError {
    move |source| match source {
        MmioError::Timeout { .. } => DriverError::Timeout { stage, source },
        other => DriverError::Mmio(other),
    }
}

impl IxgbeDevice {
    /// Resets and initializes the device. A handle can be initialized once.
    pub fn init(handle: &DeviceHandle, config: DriverConfig) -> Result<Self, DriverError> {
        config.validate(handle.max_queues())?;
        if !handle.claim_for_driver() {
            return Err(DriverError::AlreadyInitialized);
        }
        let mut dev = Self {
            handle: handle.clone(),
            regs: handle.registers().clone(),
            config,
            rx: Vec::new(),
            tx: Vec::new(),
        };
        info!("initializing {}", handle.spec());
        dev.handle.enable_bus_master()?;
        dev.reset()?;
        dev.init_link()?;
        dev.reset_stats()?;
        dev.init_rx()?;
        dev.init_tx()?;
        for q in 0..dev.rx.len() {
            dev.start_rx(q)?;
        }
        for q in 0..dev.tx.len() {
            dev.start_tx(q)?;
        }
        dev.set_promisc(dev.config.promisc)?;
        dev.regs
            .wait_set32(LINKS, LINKS_UP, dev.config.link_timeout)
            .map_err(timeout("link up"))?;
        info!("{} up at {} Mbit/s", handle.spec(), dev.link_speed()?);
        Ok(dev)
    }

    fn reset(&mut self) -> Result<(), DriverError> {
        let r = &self.regs;
        let t = self.config.reset_timeout;
        r.write32(EIMC, EIMC_ALL)?;
        r.write32(CTRL, CTRL_RST_MASK)?;
        r.wait_clear32(CTRL, CTRL_RST_MASK, t)
            .map_err(timeout("device reset"))?;
        std::thread::sleep(self.handle.reset_settle());
        r.write32(EIMC, EIMC_ALL)?;
        r.wait_set32(EEC, EEC_ARD, t)
            .map_err(timeout("EEPROM auto-read"))?;
        r.wait_set32(RDRXCTL, RDRXCTL_DMAIDONE, t)
            .map_err(timeout("DMA init"))?;
        Ok(())
    }

    fn init_link(&mut self) -> Result<(), DriverError> {
        let r = &self.regs;
        let autoc = r.read32(AUTOC)?;
        r.write32(AUTOC, (autoc & !AUTOC_LMS_MASK) | AUTOC_LMS_10G_SERIAL)?;
        let autoc = r.read32(AUTOC)?;
        r.write32(AUTOC, (autoc & !AUTOC_10G_PMA_PMD_MASK) | AUTOC_10G_XAUI)?;
        r.set_flags32(AUTOC, AUTOC_AN_RESTART)?;
        Ok(())
    }

    fn allocate_ring(&self) -> Result<DmaRegion, DriverError> {
        Ok(self
            .handle
            .allocate_dma(self.config.ring_size * DESC_SIZE, true)?)
    }

    fn init_rx(&mut self) -> Result<(), DriverError> {
        let r = self.regs.clone();
        r.clear_flags32(RXCTRL, RXCTRL_RXEN)?;
        r.write32(rxpbsize(0), RXPBSIZE_128KB)?;
        for i in 1..8 {
            r.write32(rxpbsize(i), 0)?;
        }
        r.set_flags32(HLREG0, HLREG0_RXCRCSTRP)?;
        r.set_flags32(RDRXCTL, RDRXCTL_CRCSTRIP)?;
        r.set_flags32(FCTRL, FCTRL_BAM)?;
        let bsize = (self.config.entry_size / 1024) as u32 & SRRCTL_BSIZEPKT_MASK;
        for q in 0..self.config.num_rx_queues {
            let srrctl_v = r.read32(srrctl(q))?;
            r.write32(
                srrctl(q),
                (srrctl_v & !(SRRCTL_DESCTYPE_MASK | SRRCTL_BSIZEPKT_MASK))
                    | SRRCTL_DESCTYPE_ADV_ONEBUF
                    | SRRCTL_DROP_EN
                    | bsize,
            )?;
            let ring = self.allocate_ring()?;
            let base = ring.device_address();
            r.write32(rdbal(q), base as u32)?;
            r.write32(rdbah(q), (base >> 32) as u32)?;
            r.write32(rdlen(q), ring.len() as u32)?;
            r.write32(rdh(q), 0)?;
            r.write32(rdt(q), 0)?;
            let pool = Mempool::allocate(&self.handle, self.config.pool_capacity(), self.config.entry_size)?;
            debug!("rx queue {q}: ring at {base:#x}, pool {}", pool.id());
            self.rx
                .push(RxQueue::new(q, ring, self.config.ring_size as u32, pool));
        }
        r.set_flags32(CTRL_EXT, CTRL_EXT_NS_DIS)?;
        for q in 0..self.config.num_rx_queues {
            r.clear_flags32(dca_rxctrl(q), 1 << 12)?;
        }
        r.set_flags32(RXCTRL, RXCTRL_RXEN)?;
        Ok(())
    }

    fn init_tx(&mut self) -> Result<(), DriverError> {
        let r = self.regs.clone();
        r.set_flags32(HLREG0, HLREG0_TXCRCEN | HLREG0_TXPADEN)?;
        r.write32(txpbsize(0), TXPBSIZE_40KB)?;
        for i in 1..8 {
            r.write32(txpbsize(i), 0)?;
        }
        r.write32(DTXMXSZRQ, 0xFFFF)?;
        r.clear_flags32(RTTDCS, RTTDCS_ARBDIS)?;
        for q in 0..self.config.num_tx_queues {
            let ring = self.allocate_ring()?;
            let base = ring.device_address();
            r.write32(tdbal(q), base as u32)?;
            r.write32(tdbah(q), (base >> 32) as u32)?;
            r.write32(tdlen(q), ring.len() as u32)?;
            // Prefetch, host and write-back thresholds.
            let mut txdctl_v = r.read32(txdctl(q))?;
            txdctl_v &= !(0x7F | 0x7F << 8 | 0x7F << 16);
            txdctl_v |= 36 | 8 << 8 | 4 << 16;
            r.write32(txdctl(q), txdctl_v)?;
            self.tx.push(TxQueue::new(q, ring, self.config.ring_size as u32));
        }
        r.write32(DMATXCTL, DMATXCTL_TE)?;
        Ok(())
    }

    fn start_rx(&mut self, q: usize) -> Result<(), DriverError> {
        self.rx[q].fill()?;
        let r = &self.regs;
        let t = self.config.reset_timeout;
        r.set_flags32(rxdctl(q), RXDCTL_ENABLE)?;
        r.wait_set32(rxdctl(q), RXDCTL_ENABLE, t)
            .map_err(timeout("rx queue enable"))?;
        r.write32(rdh(q), 0)?;
        r.write32(rdt(q), self.config.ring_size as u32 - 1)?;
        Ok(())
    }

    fn start_tx(&mut self, q: usize) -> Result<(), DriverError> {
        let r = &self.regs;
        r.write32(tdh(q), 0)?;
        r.write32(tdt(q), 0)?;
        r.set_flags32(txdctl(q), TXDCTL_ENABLE)?;
        r.wait_set32(txdctl(q), TXDCTL_ENABLE, self.config.reset_timeout)
            .map_err(timeout("tx queue enable"))?;
        Ok(())
    }

    pub fn handle(&self) -> &DeviceHandle {
        &self.handle
    }

    pub fn registers(&self) -> &MmioRegion {
        &self.regs
    }

    pub fn config(&self) -> &DriverConfig {
        &self.config
    }

    pub fn rx_pool(&self, queue: usize) -> Option<&Mempool> {
        self.rx.get(queue).map(|q| &q.pool)
    }

    /// Buffers sitting in the rx ring (always the ring size once started).
    pub fn rx_ring_buffers(&self, queue: usize) -> usize {
        self.rx
            .get(queue)
            .map_or(0, |q| q.slots.iter().filter(|s| s.is_some()).count())
    }

    /// Buffers handed to the tx ring and not yet reclaimed.
    pub fn tx_in_flight(&self, queue: usize) -> usize {
        self.tx.get(queue).map_or(0, |q| q.in_flight() as usize)
    }

    /// Reclaims every completed tx descriptor on all queues.
    pub fn clean_tx_all(&mut self) -> usize {
        self.tx.iter_mut().map(TxQueue::clean_all).sum()
    }

    fn read_wide(&self, lo: usize, hi: usize) -> Result<u64, DriverError> {
        let l = self.regs.read32(lo)? as u64;
        let h = self.regs.read32(hi)? as u64;
        Ok(l | h << 32)
    }
}

impl NetDevice for IxgbeDevice {
    fn rx_batch(
        &mut self,
        queue: usize,
        out: &mut Vec<PacketBuffer>,
        max: usize,
    ) -> Result<usize, DriverError> {
        let q = self.rx.get_mut(queue).ok_or(DriverError::NoSuchQueue { queue })?;
        if max == 0 {
            return Ok(0);
        }
        q.receive(&self.regs, out, max)
    }

    fn tx_batch(&mut self, queue: usize, bufs: &mut Vec<PacketBuffer>) -> Result<usize, DriverError> {
        let q = self.tx.get_mut(queue).ok_or(DriverError::NoSuchQueue { queue })?;
        q.send(&self.regs, bufs)
    }

    fn read_stats(&mut self) -> Result<DeviceStats, DriverError> {
        let r = &self.regs;
        let mut missed = 0u64;
        for i in 0..8 {
            missed += r.read32(mpc(i))? as u64;
        }
        Ok(DeviceStats {
            rx_packets: r.read32(GPRC)? as u64,
            tx_packets: r.read32(GPTC)? as u64,
            rx_bytes: self.read_wide(GORCL, GORCH)?,
            tx_bytes: self.read_wide(GOTCL, GOTCH)?,
            rx_missed: missed,
        })
    }

    fn reset_stats(&mut self) -> Result<(), DriverError> {
        self.read_stats().map(|_| ())
    }

    fn set_promisc(&mut self, on: bool) -> Result<(), DriverError> {
        if on {
            self.regs.set_flags32(FCTRL, FCTRL_MPE | FCTRL_UPE)?;
        } else {
            self.regs.clear_flags32(FCTRL, FCTRL_MPE | FCTRL_UPE)?;
        }
        Ok(())
    }

    fn link_speed(&self) -> Result<u32, DriverError> {
        Ok(decode_link_speed(self.regs.read32(LINKS)?))
    }
}

impl Drop for IxgbeDevice {
    fn drop(&mut self) {
        // Stop the device from touching rings and buffers that are about to
        // go back to their pools.
        for q in 0..self.rx.len() {
            let _ = self.regs.clear_flags32(rxdctl(q), RXDCTL_ENABLE);
        }
        for q in 0..self.tx.len() {
            let _ = self.regs.clear_flags32(txdctl(q), TXDCTL_ENABLE);
        }
    }
}
