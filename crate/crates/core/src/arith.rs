//! Counter arithmetic policy for the hot path, plus a checked header helper.
//!
//! Packet counters in the forwarder are updated through an [`Arith`] policy
//! so the benchmark can compare overflow-checked against plain wrapping
//! additions in the same binary.

use thiserror::Error;

pub trait Arith: Copy + Default + Send + 'static {
    const NAME: &'static str;
    fn add(a: u64, b: u64) -> u64;
}

/// Panics on overflow, like a build with `overflow-checks = true`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Checked;

/// Two's-complement wrap, like a build without overflow checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct Wrapping;

impl Arith for Checked {
    const NAME: &'static str = "checked";

    #[inline]
    fn add(a: u64, b: u64) -> u64 {
        a.checked_add(b).expect("counter overflow")
    }
}

impl Arith for Wrapping {
    const NAME: &'static str = "wrapping";

    #[inline]
    fn add(a: u64, b: u64) -> u64 {
        a.wrapping_add(b)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeaderError {
    #[error("offset {offset} outside frame of {len} bytes")]
    OutOfBounds { offset: usize, len: usize },
    #[error("time-to-live already 0")]
    TtlExpired,
}

/// Decrements a one-byte time-to-live field in place. A field that is already
/// 0 is an error instead of wrapping to 255.
pub fn decrement_ttl(frame: &mut [u8], offset: usize) -> Result<u8, HeaderError> {
    let len = frame.len();
    let ttl = frame
        .get_mut(offset)
        .ok_or(HeaderError::OutOfBounds { offset, len })?;
    *ttl = ttl.checked_sub(1).ok_or(HeaderError::TtlExpired)?;
    Ok(*ttl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttl_zero_is_an_error() {
        let mut f = [0u8, 5];
        assert_eq!(decrement_ttl(&mut f, 0), Err(HeaderError::TtlExpired));
        assert_eq!(f[0], 0);
        assert_eq!(decrement_ttl(&mut f, 1), Ok(4));
        assert!(decrement_ttl(&mut f, 2).is_err());
    }

    #[test]
    #[should_panic(expected = "counter overflow")]
    fn checked_panics() {
        Checked::add(u64::MAX, 1);
    }

    #[test]
    fn wrapping_wraps() {
        assert_eq!(Wrapping::add(u64::MAX, 2), 1);
    }
}
