use std::sync::atomic::Ordering;

use super::desc::*;
use super::regs;
use super::DriverError;
use crate::memory::{Mempool, PacketBuffer};
use crate::mmio::MmioRegion;
use crate::model::MIN_FRAME;
use crate::platform::dma::DmaRegion;

/// Completed tx descriptors are reclaimed in groups of this many.
pub const TX_CLEAN_BATCH: u32 = 32;

#[inline]
pub(crate) const fn advance(index: u32, size: u32) -> u32 {
    (index + 1) & (size - 1)
}

#[inline]
const fn slot(index: u32) -> usize {
    index as usize * DESC_SIZE
}

pub(crate) struct RxQueue {
    pub(crate) id: usize,
    pub(crate) ring: DmaRegion,
    pub(crate) size: u32,
    pub(crate) next: u32,
    pub(crate) slots: Vec<Option<PacketBuffer>>,
    pub(crate) pool: Mempool,
}

impl RxQueue {
    pub(crate) fn new(id: usize, ring: DmaRegion, size: u32, pool: Mempool) -> Self {
        Self {
            id,
            ring,
            size,
            next: 0,
            slots: (0..size).map(|_| None).collect(),
            pool,
        }
    }

    fn post(&self, index: u32, buf: &PacketBuffer) {
        let at = slot(index);
        self.ring
            .store_u64(at + ADDR_WORD, buf.device_address(), Ordering::Relaxed)
            .expect("descriptor inside ring");
        self.ring
            .store_u64(at + STATUS_WORD, 0, Ordering::Release)
            .expect("descriptor inside ring");
    }

    /// Gives every slot a buffer. Called once before the queue is enabled.
    pub(crate) fn fill(&mut self) -> Result<(), DriverError> {
        for i in 0..self.size {
            let buf = self.pool.alloc().ok_or(DriverError::PoolTooSmall {
                capacity: self.pool.capacity(),
                needed: self.size as usize,
            })?;
            self.post(i, &buf);
            self.slots[i as usize] = Some(buf);
        }
        Ok(())
    }

    pub(crate) fn receive(
        &mut self,
        regs: &MmioRegion,
        out: &mut Vec<PacketBuffer>,
        max: usize,
    ) -> Result<usize, DriverError> {
        let mut index = self.next;
        let mut last = None;
        let mut n = 0;
        while n < max {
            let word = self
                .ring
                .load_u64(slot(index) + STATUS_WORD, Ordering::Acquire)
                .expect("descriptor inside ring");
            let (status, len) = rx_status(word);
            if status & RXD_STAT_DD == 0 {
                break;
            }
            if status & RXD_STAT_EOP == 0 {
                return Err(DriverError::MultiSegment { queue: self.id });
            }
            let Some(fresh) = self.pool.alloc() else {
                break;
            };
            self.post(index, &fresh);
            let mut buf = self.slots[index as usize]
                .replace(fresh)
                .expect("rx slot always holds a buffer");
            buf.set_len(len as usize)
                .map_err(|_| DriverError::BadDescriptor { queue: self.id, len })?;
            out.push(buf);
            last = Some(index);
            index = advance(index, self.size);
            n += 1;
        }
        self.next = index;
        if let Some(tail) = last {
            regs.write32(regs::rdt(self.id), tail)?;
        }
        Ok(n)
    }
}

pub(crate) struct TxQueue {
    pub(crate) id: usize,
    pub(crate) ring: DmaRegion,
    pub(crate) size: u32,
    pub(crate) next: u32,
    pub(crate) clean: u32,
    pub(crate) slots: Vec<Option<PacketBuffer>>,
}

impl TxQueue {
    pub(crate) fn new(id: usize, ring: DmaRegion, size: u32) -> Self {
        Self {
            id,
            ring,
            size,
            next: 0,
            clean: 0,
            slots: (0..size).map(|_| None).collect(),
        }
    }

    pub(crate) fn in_flight(&self) -> u32 {
        self.next.wrapping_sub(self.clean) & (self.size - 1)
    }

    fn done(&self, index: u32) -> bool {
        let word = self
            .ring
            .load_u64(slot(index) + STATUS_WORD, Ordering::Acquire)
            .expect("descriptor inside ring");
        tx_done(word)
    }

    fn release(&mut self, upto: u32) {
        let mut i = self.clean;
        loop {
            self.slots[i as usize] = None;
            if i == upto {
                break;
            }
            i = advance(i, self.size);
        }
        self.clean = advance(upto, self.size);
    }

    /// Reclaims completed descriptors, a full chunk at a time.
    pub(crate) fn clean(&mut self) {
        while self.in_flight() >= TX_CLEAN_BATCH {
            let upto = (self.clean + TX_CLEAN_BATCH - 1) & (self.size - 1);
            if !self.done(upto) {
                break;
            }
            self.release(upto);
        }
    }

    /// Reclaims every completed descriptor regardless of chunking.
    pub(crate) fn clean_all(&mut self) -> usize {
        let mut n = 0;
        while self.in_flight() > 0 && self.done(self.clean) {
            let c = self.clean;
            self.release(c);
            n += 1;
        }
        n
    }

    pub(crate) fn send(
        &mut self,
        regs: &MmioRegion,
        bufs: &mut Vec<PacketBuffer>,
    ) -> Result<usize, DriverError> {
        if let Some((index, b)) = bufs
            .iter()
            .enumerate()
            .find(|(_, b)| !(MIN_FRAME..=b.entry_size()).contains(&b.len()) || b.len() > u16::MAX as usize)
        {
            return Err(DriverError::InvalidLength {
                index,
                len: b.len(),
                min: MIN_FRAME,
                max: b.entry_size(),
            });
        }
        if bufs.is_empty() {
            return Ok(0);
        }
        self.clean();
        let free = (self.size - 1 - self.in_flight()) as usize;
        let sent = free.min(bufs.len());
        for buf in bufs.drain(..sent) {
            let at = slot(self.next);
            self.ring
                .store_u64(at + ADDR_WORD, buf.device_address(), Ordering::Relaxed)
                .expect("descriptor inside ring");
            self.ring
                .store_u64(at + STATUS_WORD, tx_command(buf.len() as u16), Ordering::Release)
                .expect("descriptor inside ring");
            self.slots[self.next as usize] = Some(buf);
            self.next = advance(self.next, self.size);
        }
        if sent > 0 {
            regs.write32(regs::tdt(self.id), self.next)?;
        }
        Ok(sent)
    }
}
