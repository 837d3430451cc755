//! Bounds-checked access to device register space.
//!
//! Every logical [`MmioRegion::read32`] or [`MmioRegion::write32`] turns into
//! exactly one access on the backing: the region never caches values, never
//! drops a write that is not read back, and never coalesces a polling loop
//! into a single read. Out-of-range or misaligned offsets are rejected before
//! the backing is touched.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

/// Something that answers 32-bit register accesses: a mapped PCIe BAR or the
/// software device model.
///
/// Implementations must perform each call as exactly one device access.
/// Offsets passed in are already checked against [`MmioRegion::len`] and are
/// 4-byte aligned.
pub trait RegisterBackend: Send + Sync {
    fn read32(&self, offset: u32) -> u32;
    fn write32(&self, offset: u32, value: u32);
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MmioError {
    #[error("register offset {offset:#x} outside region of {len:#x} bytes")]
    OutOfBounds { offset: usize, len: usize },
    #[error("register offset {offset:#x} is not 4-byte aligned")]
    Misaligned { offset: usize },
    #[error("device timeout waiting on register {offset:#x} mask {mask:#010x} after {waited:?}")]
    Timeout {
        offset: usize,
        mask: u32,
        waited: Duration,
    },
}

/// Polling behaviour of the `wait_*` helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PollConfig {
    /// Time spent spinning (with `yield_now`) between two reads.
    pub interval: Duration,
}

impl Default for PollConfig {
    fn default() -> Self {
        Self {
            interval: Duration::from_micros(10),
        }
    }
}

/// A window onto device register space.
#[derive(Clone)]
pub struct MmioRegion {
    backend: Arc<dyn RegisterBackend>,
    len: usize,
    poll: PollConfig,
}

impl fmt::Debug for MmioRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MmioRegion")
            .field("len", &format_args!("{:#x}", self.len))
            .field("poll", &self.poll)
            .finish()
    }
}

impl MmioRegion {
    pub fn new(backend: Arc<dyn RegisterBackend>, len: usize) -> Self {
        Self {
            backend,
            len,
            poll: PollConfig::default(),
        }
    }

    pub fn with_poll_config(mut self, poll: PollConfig) -> Self {
        self.poll = poll;
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn poll_config(&self) -> PollConfig {
        self.poll
    }

    fn check(&self, offset: usize) -> Result<u32, MmioError> {
        if offset % 4 != 0 {
            return Err(MmioError::Misaligned { offset });
        }
        match offset.checked_add(4) {
            Some(end) if end <= self.len => {}
            _ => {
                return Err(MmioError::OutOfBounds {
                    offset,
                    len: self.len,
                })
            }
        }
        u32::try_from(offset).map_err(|_| MmioError::OutOfBounds {
            offset,
            len: self.len,
        })
    }

    #[inline]
    pub fn read32(&self, offset: usize) -> Result<u32, MmioError> {
        let offset = self.check(offset)?;
        Ok(self.backend.read32(offset))
    }

    #[inline]
    pub fn write32(&self, offset: usize, value: u32) -> Result<(), MmioError> {
        let offset = self.check(offset)?;
        self.backend.write32(offset, value);
        Ok(())
    }

    /// Read-modify-write: `reg |= mask`. One read and one write.
    pub fn set_flags32(&self, offset: usize, mask: u32) -> Result<(), MmioError> {
        let offset = self.check(offset)?;
        let old = self.backend.read32(offset);
        self.backend.write32(offset, old | mask);
        Ok(())
    }

    /// Read-modify-write: `reg &= !mask`. One read and one write.
    pub fn clear_flags32(&self, offset: usize, mask: u32) -> Result<(), MmioError> {
        let offset = self.check(offset)?;
        let old = self.backend.read32(offset);
        self.backend.write32(offset, old & !mask);
        Ok(())
    }

    /// Polls until all bits of `mask` are set.
    pub fn wait_set32(&self, offset: usize, mask: u32, timeout: Duration) -> Result<(), MmioError> {
        self.wait(offset, mask, timeout, |v| v & mask == mask)
    }

    /// Polls until all bits of `mask` are clear.
    pub fn wait_clear32(&self, offset: usize, mask: u32, timeout: Duration) -> Result<(), MmioError> {
        self.wait(offset, mask, timeout, |v| v & mask == 0)
    }

    fn wait(
        &self,
        offset: usize,
        mask: u32,
        timeout: Duration,
        done: impl Fn(u32) -> bool,
    ) -> Result<(), MmioError> {
        let reg = self.check(offset)?;
        let start = Instant::now();
        loop {
            if done(self.backend.read32(reg)) {
                return Ok(());
            }
            let waited = start.elapsed();
            if waited >= timeout {
                return Err(MmioError::Timeout { offset, mask, waited });
            }
            let until = Instant::now() + self.poll.interval;
            while Instant::now() < until {
                std::thread::yield_now();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Plain storage that logs every access.
    #[derive(Default)]
    struct Recorder {
        regs: Mutex<std::collections::HashMap<u32, u32>>,
        log: Mutex<Vec<(char, u32)>>,
    }

    impl RegisterBackend for Recorder {
        fn read32(&self, offset: u32) -> u32 {
            self.log.lock().unwrap().push(('r', offset));
            *self.regs.lock().unwrap().get(&offset).unwrap_or(&0)
        }
        fn write32(&self, offset: u32, value: u32) {
            self.log.lock().unwrap().push(('w', offset));
            self.regs.lock().unwrap().insert(offset, value);
        }
    }

    fn region() -> (Arc<Recorder>, MmioRegion) {
        let rec = Arc::new(Recorder::default());
        (rec.clone(), MmioRegion::new(rec, 0x100))
    }

    #[test]
    fn out_of_range_never_reaches_backend() {
        let (rec, r) = region();
        assert_eq!(
            r.read32(0x100),
            Err(MmioError::OutOfBounds {
                offset: 0x100,
                len: 0x100
            })
        );
        assert_eq!(r.write32(0xfd, 1), Err(MmioError::Misaligned { offset: 0xfd }));
        assert!(r.read32(usize::MAX - 3).is_err());
        assert!(rec.log.lock().unwrap().is_empty());
    }

    #[test]
    fn last_word_is_accessible() {
        let (_, r) = region();
        r.write32(0xfc, 5).unwrap();
        assert_eq!(r.read32(0xfc), Ok(5));
    }

    #[test]
    fn flag_helpers_do_one_read_and_one_write() {
        let (rec, r) = region();
        r.write32(0x10, 0b0101).unwrap();
        r.set_flags32(0x10, 0b0010).unwrap();
        assert_eq!(r.read32(0x10), Ok(0b0111));
        r.clear_flags32(0x10, 0b0101).unwrap();
        assert_eq!(r.read32(0x10), Ok(0b0010));
        let log = rec.log.lock().unwrap();
        assert_eq!(
            *log,
            vec![
                ('w', 0x10),
                ('r', 0x10),
                ('w', 0x10),
                ('r', 0x10),
                ('r', 0x10),
                ('w', 0x10),
                ('r', 0x10)
            ]
        );
    }

    #[test]
    fn wait_times_out() {
        let (_, r) = region();
        let err = r.wait_set32(0x20, 1, Duration::from_millis(10)).unwrap_err();
        match err {
            MmioError::Timeout { offset, mask, waited } => {
                assert_eq!((offset, mask), (0x20, 1));
                assert!(waited >= Duration::from_millis(10));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wait_clear_returns_immediately_on_zero() {
        let (rec, r) = region();
        r.wait_clear32(0x20, 0xff, Duration::ZERO).unwrap();
        assert_eq!(rec.log.lock().unwrap().len(), 1);
    }
}
