//! Test frame layout shared by the generator, the forwarder tests and the
//! benchmarks.
//!
//! | bytes  | content                                  |
//! |--------|------------------------------------------|
//! | 0..6   | destination 02:00:00:00:00:01            |
//! | 6..12  | source 02:00:00:00:00:02                 |
//! | 12..14 | ethertype 0x88b5 (local experimental)    |
//! | 14..16 | sequence number, 16 bit big endian       |
//! | 16..24 | send timestamp, 64 bit big endian        |
//! | 24..   | payload from a seeded ChaCha8 stream     |

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DST_MAC: [u8; 6] = [0x02, 0, 0, 0, 0, 0x01];
pub const SRC_MAC: [u8; 6] = [0x02, 0, 0, 0, 0, 0x02];
pub const ETHERTYPE: u16 = 0x88b5;
pub const SEQ_OFFSET: usize = 14;
pub const TICK_OFFSET: usize = 16;
pub const PAYLOAD_OFFSET: usize = 24;
pub const MIN_SIZE: usize = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("frame size {size} outside {min}..={max}")]
pub struct FrameSizeError {
    pub size: usize,
    pub min: usize,
    pub max: usize,
}

/// Stamps sequence numbers and timestamps onto a fixed seeded template.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    template: Vec<u8>,
}

impl FrameBuilder {
    pub fn new(size: usize, max_size: usize, seed: u64) -> Result<Self, FrameSizeError> {
        if !(MIN_SIZE..=max_size).contains(&size) {
            return Err(FrameSizeError {
                size,
                min: MIN_SIZE,
                max: max_size,
            });
        }
        let mut template = vec![0u8; size];
        template[0..6].copy_from_slice(&DST_MAC);
        template[6..12].copy_from_slice(&SRC_MAC);
        template[12..14].copy_from_slice(&ETHERTYPE.to_be_bytes());
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut template[PAYLOAD_OFFSET..]);
        Ok(Self { template })
    }

    pub fn len(&self) -> usize {
        self.template.len()
    }

    pub fn is_empty(&self) -> bool {
        self.template.is_empty()
    }

    /// Writes the frame for `seq` into the start of `buf`.
    pub fn write_into(&self, buf: &mut [u8], seq: u64, tick: u64) {
        let f = &mut buf[..self.template.len()];
        f.copy_from_slice(&self.template);
        f[SEQ_OFFSET..SEQ_OFFSET + 2].copy_from_slice(&((seq & 0xffff) as u16).to_be_bytes());
        f[TICK_OFFSET..TICK_OFFSET + 8].copy_from_slice(&tick.to_be_bytes());
    }

    pub fn build(&self, seq: u64, tick: u64) -> Vec<u8> {
        let mut f = vec![0; self.template.len()];
        self.write_into(&mut f, seq, tick);
        f
    }
}

pub fn seq16(frame: &[u8]) -> Option<u16> {
    let b = frame.get(SEQ_OFFSET..SEQ_OFFSET + 2)?;
    Some(u16::from_be_bytes([b[0], b[1]]))
}

pub fn tick(frame: &[u8]) -> Option<u64> {
    let b = frame.get(TICK_OFFSET..TICK_OFFSET + 8)?;
    Some(u64::from_be_bytes(b.try_into().ok()?))
}
