use std::collections::{HashMap, HashSet};
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex, MutexGuard};

use log::warn;

use super::link::{Link, WireFrame};
use super::register::{RegisterBehavior, RegisterFile};
use super::{DmaBus, ModelConfig, ModelError, ModelFault, RingKind, VirtualClock, MIN_FRAME};
use crate::ixgbe::desc::*;
use crate::ixgbe::regs::*;
use crate::mmio::RegisterBackend;
use crate::platform::dma::DmaRegion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    /// Register read by the driver.
    Read,
    /// Register write by the driver.
    Write,
    /// Device read of packet data (`offset` = device address, `value` = length).
    DmaRead,
    /// Device write of packet data.
    DmaWrite,
    /// Device store of a descriptor status word (`value` = the word).
    DescWriteBack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRecord {
    pub seq: u64,
    pub kind: AccessKind,
    /// Register offset or device address.
    pub offset: u64,
    pub value: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessCounts {
    pub reads: u64,
    pub writes: u64,
}

/// Running model-side counters. Unlike the device statistics registers these
/// are never cleared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NicCounters {
    pub rx_delivered: u64,
    pub rx_bytes: u64,
    /// Dropped because the rx ring had no free descriptor (drop-on-full).
    pub rx_missed: u64,
    /// Discarded by the address filter.
    pub rx_filtered: u64,
    /// Arrived while the receive path was disabled.
    pub rx_disabled: u64,
    /// Larger than the configured receive buffer.
    pub rx_oversize: u64,
    /// Tail-dropped by the ingress FIFO.
    pub link_drops: u64,
    pub tx_sent: u64,
    pub tx_bytes: u64,
    pub faults: u64,
}

impl NicCounters {
    /// Every frame that reached this NIC and will never be delivered.
    pub fn device_drops(&self) -> u64 {
        self.rx_missed + self.rx_filtered + self.rx_disabled + self.rx_oversize + self.link_drops
    }
}

#[derive(Debug, Clone)]
struct Ring {
    region: DmaRegion,
    offset: usize,
    count: u32,
}

impl Ring {
    fn slot(&self, index: u32) -> usize {
        self.offset + index as usize * DESC_SIZE
    }
}

struct NicState {
    regs: RegisterFile,
    scripts: Vec<(u32, RegisterBehavior)>,
    bus_master: bool,
    rx: Option<Ring>,
    tx: Option<Ring>,
    counters: NicCounters,
    log: Vec<AccessRecord>,
    seq: u64,
    totals: AccessCounts,
    per_offset: HashMap<u32, AccessCounts>,
    warned: HashSet<u32>,
    faults: Vec<ModelFault>,
    capture: Vec<WireFrame>,
}

struct Inner {
    index: usize,
    mac: [u8; 6],
    config: ModelConfig,
    bus: DmaBus,
    clock: VirtualClock,
    state: Mutex<NicState>,
    ingress: Arc<Link>,
    peer: Mutex<Option<Arc<Link>>>,
}

/// One model NIC. Cloning yields another handle to the same device.
///
/// Lock order: the state lock may be held while a link lock is taken, never
/// the other way round.
#[derive(Clone)]
pub struct ModelNic {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for ModelNic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelNic")
            .field("index", &self.inner.index)
            .finish_non_exhaustive()
    }
}

enum RxOutcome {
    Delivered,
    Dropped,
    Idle,
}

impl ModelNic {
    pub(crate) fn new(index: usize, config: ModelConfig, bus: DmaBus, clock: VirtualClock) -> Self {
        let s = config.seed.to_be_bytes();
        let mac = [0x02, 0x4e, s[6], s[7], (index >> 8) as u8, index as u8];
        let ingress = Arc::new(Link::new(config.link_capacity));
        Self {
            inner: Arc::new(Inner {
                index,
                mac,
                bus,
                clock,
                ingress,
                peer: Mutex::new(None),
                state: Mutex::new(NicState {
                    regs: RegisterFile::reset(),
                    scripts: Vec::new(),
                    bus_master: false,
                    rx: None,
                    tx: None,
                    counters: NicCounters::default(),
                    log: Vec::new(),
                    seq: 0,
                    totals: AccessCounts::default(),
                    per_offset: HashMap::new(),
                    warned: HashSet::new(),
                    faults: Vec::new(),
                    capture: Vec::new(),
                }),
                config,
            }),
        }
    }

    fn state(&self) -> MutexGuard<'_, NicState> {
        self.inner.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn index(&self) -> usize {
        self.inner.index
    }

    pub fn mac(&self) -> [u8; 6] {
        self.inner.mac
    }

    pub fn config(&self) -> &ModelConfig {
        &self.inner.config
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.inner.clock
    }

    pub fn bus(&self) -> &DmaBus {
        &self.inner.bus
    }

    pub fn same_device(&self, other: &ModelNic) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Wires the two NICs back to back: what one transmits, the other
    /// receives.
    pub fn connect(&self, other: &ModelNic) {
        *self.inner.peer.lock().unwrap_or_else(|e| e.into_inner()) = Some(other.inner.ingress.clone());
        *other.inner.peer.lock().unwrap_or_else(|e| e.into_inner()) = Some(self.inner.ingress.clone());
    }

    fn check_frame(&self, len: usize) -> Result<(), ModelError> {
        let max = self.inner.config.max_frame;
        if (MIN_FRAME..=max).contains(&len) {
            Ok(())
        } else {
            Err(ModelError::FrameSize {
                len,
                min: MIN_FRAME,
                max,
            })
        }
    }

    /// Queues a frame on the ingress wire, stamped with the current time.
    /// Returns `Ok(false)` if the FIFO was full and the frame was dropped.
    pub fn inject(&self, frame: &[u8]) -> Result<bool, ModelError> {
        self.inject_at(self.inner.clock.now(), frame.to_vec())
    }

    pub fn inject_at(&self, tick: u64, data: Vec<u8>) -> Result<bool, ModelError> {
        self.check_frame(data.len())?;
        Ok(self.inner.ingress.push(WireFrame { tick, data }))
    }

    /// Frames waiting on the ingress wire.
    pub fn pending(&self) -> usize {
        self.inner.ingress.len()
    }

    pub fn take_capture(&self) -> Vec<WireFrame> {
        std::mem::take(&mut self.state().capture)
    }

    pub fn capture_len(&self) -> usize {
        self.state().capture.len()
    }

    pub fn counters(&self) -> NicCounters {
        let mut c = self.state().counters;
        c.link_drops = self.inner.ingress.drops();
        c
    }

    pub fn faults(&self) -> Vec<ModelFault> {
        self.state().faults.clone()
    }

    pub fn set_bus_master(&self, on: bool) {
        self.state().bus_master = on;
    }

    pub fn bus_master(&self) -> bool {
        self.state().bus_master
    }

    pub fn access_counts(&self) -> AccessCounts {
        self.state().totals
    }

    pub fn access_counts_at(&self, offset: usize) -> AccessCounts {
        self.state()
            .per_offset
            .get(&(offset as u32))
            .copied()
            .unwrap_or_default()
    }

    pub fn reads_at(&self, offset: usize) -> u64 {
        self.access_counts_at(offset).reads
    }

    pub fn writes_at(&self, offset: usize) -> u64 {
        self.access_counts_at(offset).writes
    }

    pub fn access_log(&self) -> Vec<AccessRecord> {
        self.state().log.clone()
    }

    pub fn clear_access_log(&self) {
        self.state().log.clear();
    }

    /// Register value without an access being recorded or side effects.
    pub fn peek_register(&self, offset: usize) -> Option<u32> {
        let st = self.state();
        st.regs.is_known(offset as u32).then(|| st.regs.peek(offset))
    }

    /// Installs a scripted behaviour. Scripts survive device resets.
    pub fn script_register(&self, offset: usize, behavior: RegisterBehavior) -> Result<(), ModelError> {
        let off = u32::try_from(offset).map_err(|_| ModelError::UnknownRegister { offset: u32::MAX })?;
        let mut st = self.state();
        if !st.regs.script(off, behavior.clone()) {
            return Err(ModelError::UnknownRegister { offset: off });
        }
        st.scripts.retain(|(o, _)| *o != off);
        st.scripts.push((off, behavior));
        Ok(())
    }

    pub fn clear_scripts(&self) {
        self.state().scripts.clear();
    }

    /// Descriptor slots currently owned by the device on the rx ring.
    pub fn rx_ring_owned(&self) -> Option<u32> {
        let st = self.state();
        let ring = st.rx.as_ref()?;
        let head = st.regs.peek(rdh(0));
        let tail = st.regs.peek(rdt(0));
        Some(tail.wrapping_sub(head) & (ring.count - 1))
    }

    /// Runs up to `budget` descriptor transactions: transmit completions
    /// first, then receive deliveries. Frames dropped on arrival do not use
    /// budget. Returns the number of transactions performed.
    pub fn step(&self, budget: usize) -> usize {
        let mut st = self.state();
        let mut done = 0;
        while done < budget && self.tx_one(&mut st) {
            done += 1;
        }
        while done < budget {
            match self.rx_one(&mut st) {
                RxOutcome::Delivered => done += 1,
                RxOutcome::Dropped => {}
                RxOutcome::Idle => break,
            }
        }
        done
    }

    fn record(&self, st: &mut NicState, kind: AccessKind, offset: u64, value: u64) {
        st.seq += 1;
        if self.inner.config.access_log {
            st.log.push(AccessRecord {
                seq: st.seq,
                kind,
                offset,
                value,
            });
        }
    }

    fn fault(&self, st: &mut NicState, fault: ModelFault) {
        warn!("model nic {}: {fault}", self.inner.index);
        st.counters.faults += 1;
        st.faults.push(fault);
    }

    fn tx_one(&self, st: &mut NicState) -> bool {
        if !st.bus_master || st.regs.peek(DMATXCTL) & DMATXCTL_TE == 0 {
            return false;
        }
        let Some(ring) = st.tx.clone() else {
            return false;
        };
        let head = st.regs.peek(tdh(0));
        let tail = st.regs.peek(tdt(0));
        if head == tail {
            return false;
        }
        let slot = ring.slot(head);
        let (addr, cmd) = match (
            ring.region.load_u64(slot + ADDR_WORD, Ordering::Relaxed),
            ring.region.load_u64(slot + STATUS_WORD, Ordering::Acquire),
        ) {
            (Ok(a), Ok(c)) => (a, c),
            _ => unreachable!("ring bounds were validated at enable"),
        };
        let len = tx_length(cmd);
        if !(1..=self.inner.config.max_frame).contains(&(len as usize)) {
            self.fault(st, ModelFault::BadTxLength { slot: head, len });
            st.tx = None;
            return false;
        }
        let mut data = vec![0u8; len as usize];
        if let Err(f) = self.inner.bus.read(addr, &mut data) {
            self.fault(st, f);
            st.tx = None;
            return false;
        }
        self.record(st, AccessKind::DmaRead, addr, len as u64);
        let wb = tx_writeback(cmd);
        ring.region
            .store_u64(slot + STATUS_WORD, wb, Ordering::Release)
            .expect("validated ring");
        self.record(
            st,
            AccessKind::DescWriteBack,
            ring.region.translate(slot).unwrap_or(0),
            wb,
        );
        st.regs.set(tdh(0), (head + 1) & (ring.count - 1));
        st.regs.bump(GPTC, 1);
        st.regs.bump_wide(GOTCL, GOTCH, len as u64);
        st.counters.tx_sent += 1;
        st.counters.tx_bytes += len as u64;
        let tick = self.inner.clock.advance(self.inner.config.desc_cost);
        let frame = WireFrame { tick, data };
        let peer = self.inner.peer.lock().unwrap_or_else(|e| e.into_inner()).clone();
        match (self.inner.config.capture, peer) {
            (true, Some(p)) => {
                st.capture.push(frame.clone());
                p.push(frame);
            }
            (true, None) => st.capture.push(frame),
            (false, Some(p)) => {
                p.push(frame);
            }
            (false, None) => {}
        }
        true
    }

    fn accepts(&self, st: &NicState, frame: &[u8]) -> bool {
        let fctrl = st.regs.peek(FCTRL);
        let dst = &frame[..6];
        if dst == [0xff; 6] {
            fctrl & (FCTRL_BAM | FCTRL_MPE) != 0
        } else if dst[0] & 1 != 0 {
            fctrl & FCTRL_MPE != 0
        } else {
            dst == self.inner.mac || fctrl & FCTRL_UPE != 0
        }
    }

    fn rx_one(&self, st: &mut NicState) -> RxOutcome {
        let Some(frame) = self.inner.ingress.pop() else {
            return RxOutcome::Idle;
        };
        let enabled = st.bus_master
            && st.regs.peek(RXCTRL) & RXCTRL_RXEN != 0
            && st.regs.peek(rxdctl(0)) & RXDCTL_ENABLE != 0;
        let Some(ring) = st.rx.clone().filter(|_| enabled) else {
            st.counters.rx_disabled += 1;
            return RxOutcome::Dropped;
        };
        if !self.accepts(st, &frame.data) {
            st.counters.rx_filtered += 1;
            return RxOutcome::Dropped;
        }
        let srrctl = st.regs.peek(srrctl(0));
        let bsize = match (srrctl & SRRCTL_BSIZEPKT_MASK) as usize {
            0 => 2048,
            kb => kb * 1024,
        };
        if frame.data.len() > bsize {
            st.counters.rx_oversize += 1;
            return RxOutcome::Dropped;
        }
        let head = st.regs.peek(rdh(0));
        let tail = st.regs.peek(rdt(0));
        if head == tail {
            if srrctl & SRRCTL_DROP_EN != 0 {
                st.regs.bump(mpc(0), 1);
                st.counters.rx_missed += 1;
                return RxOutcome::Dropped;
            }
            self.inner.ingress.unpop(frame);
            return RxOutcome::Idle;
        }
        let slot = ring.slot(head);
        let addr = ring
            .region
            .load_u64(slot + ADDR_WORD, Ordering::Relaxed)
            .expect("validated ring");
        if let Err(f) = self.inner.bus.write(addr, &frame.data) {
            self.fault(st, f);
            st.rx = None;
            return RxOutcome::Dropped;
        }
        let len = frame.data.len();
        self.record(st, AccessKind::DmaWrite, addr, len as u64);
        let wb = rx_writeback(RXD_STAT_DD | RXD_STAT_EOP, len as u16);
        ring.region
            .store_u64(slot + STATUS_WORD, wb, Ordering::Release)
            .expect("validated ring");
        self.record(
            st,
            AccessKind::DescWriteBack,
            ring.region.translate(slot).unwrap_or(0),
            wb,
        );
        st.regs.set(rdh(0), (head + 1) & (ring.count - 1));
        st.regs.bump(GPRC, 1);
        st.regs.bump_wide(GORCL, GORCH, len as u64);
        st.counters.rx_delivered += 1;
        st.counters.rx_bytes += len as u64;
        self.inner.clock.advance(self.inner.config.desc_cost);
        RxOutcome::Delivered
    }

    fn bind_ring(&self, st: &NicState, kind: RingKind) -> Result<Ring, ModelFault> {
        let (lo, hi, len) = match kind {
            RingKind::Rx => (rdbal(0), rdbah(0), rdlen(0)),
            RingKind::Tx => (tdbal(0), tdbah(0), tdlen(0)),
        };
        let base = st.regs.peek(lo) as u64 | (st.regs.peek(hi) as u64) << 32;
        let len = st.regs.peek(len);
        let bad = ModelFault::BadRing { kind, base, len };
        let count = len / DESC_SIZE as u32;
        if len == 0 || len % 128 != 0 || base % 128 != 0 || !count.is_power_of_two() {
            return Err(bad);
        }
        let (region, offset) = self.inner.bus.resolve(base, len as usize).map_err(|_| bad)?;
        Ok(Ring {
            region,
            offset,
            count,
        })
    }

    fn device_reset(&self, st: &mut NicState) {
        st.regs = RegisterFile::reset();
        for (off, b) in &st.scripts {
            st.regs.script(*off, b.clone());
        }
        st.rx = None;
        st.tx = None;
    }

    fn enable_write(&self, st: &mut NicState, kind: RingKind, offset: usize, value: u32) {
        let enable = match kind {
            RingKind::Rx => RXDCTL_ENABLE,
            RingKind::Tx => TXDCTL_ENABLE,
        };
        let slot = match kind {
            RingKind::Rx => &mut st.rx,
            RingKind::Tx => &mut st.tx,
        };
        if value & enable == 0 {
            *slot = None;
            st.regs.set(offset, value);
            return;
        }
        match self.bind_ring(st, kind) {
            Ok(ring) => {
                match kind {
                    RingKind::Rx => st.rx = Some(ring),
                    RingKind::Tx => st.tx = Some(ring),
                }
                st.regs.set(offset, value);
            }
            Err(f) => {
                self.fault(st, f);
                st.regs.set(offset, value & !enable);
            }
        }
    }

    fn tail_write(&self, st: &mut NicState, kind: RingKind, offset: usize, value: u32) {
        let ring = match kind {
            RingKind::Rx => st.rx.as_ref(),
            RingKind::Tx => st.tx.as_ref(),
        };
        if let Some(r) = ring {
            if value >= r.count {
                let count = r.count;
                self.fault(
                    st,
                    ModelFault::TailOutOfRange {
                        kind,
                        tail: value,
                        count,
                    },
                );
                return;
            }
        }
        st.regs.set(offset, value);
    }

    fn apply_write(&self, st: &mut NicState, offset: u32, value: u32) {
        let off = offset as usize;
        if off == CTRL {
            if value & CTRL_RST_MASK != 0 {
                self.device_reset(st);
            } else {
                st.regs.set(CTRL, value);
            }
        } else if off == rxdctl(0) {
            self.enable_write(st, RingKind::Rx, off, value);
        } else if off == txdctl(0) {
            self.enable_write(st, RingKind::Tx, off, value);
        } else if off == rdt(0) {
            self.tail_write(st, RingKind::Rx, off, value);
        } else if off == tdt(0) {
            self.tail_write(st, RingKind::Tx, off, value);
        } else {
            st.regs.set(off, value);
        }
    }

    fn unknown(&self, st: &mut NicState, offset: u32) {
        if st.warned.insert(offset) {
            warn!(
                "model nic {}: access to unmodelled register {offset:#x}",
                self.inner.index
            );
        }
    }
}

impl RegisterBackend for ModelNic {
    fn read32(&self, offset: u32) -> u32 {
        let mut st = self.state();
        let value = match st.regs.read(offset) {
            Some(v) => v,
            None => {
                self.unknown(&mut st, offset);
                0
            }
        };
        st.totals.reads += 1;
        st.per_offset.entry(offset).or_default().reads += 1;
        self.record(&mut st, AccessKind::Read, offset as u64, value as u64);
        self.inner.clock.advance(self.inner.config.mmio_cost);
        value
    }

    fn write32(&self, offset: u32, value: u32) {
        let mut st = self.state();
        if st.regs.is_known(offset) {
            self.apply_write(&mut st, offset, value);
        } else {
            self.unknown(&mut st, offset);
        }
        st.totals.writes += 1;
        st.per_offset.entry(offset).or_default().writes += 1;
        self.record(&mut st, AccessKind::Write, offset as u64, value as u64);
        self.inner.clock.advance(self.inner.config.mmio_cost);
    }
}
