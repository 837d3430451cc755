//! 16-byte advanced descriptor layout shared by the driver and the model.
//!
//! Both formats are accessed as two little-endian 64-bit words: word 0 at
//! byte 0 carries the buffer address, word 1 at byte 8 carries control and
//! status. The device publishes completion by storing word 1 with release
//! ordering after the buffer contents are final; the driver loads it with
//! acquire ordering.
//!
//! Receive write-back, word 1: `status_error` (bits 0..32), `length`
//! (bits 32..48), `vlan` (bits 48..64).
//!
//! Transmit read format, word 1: `cmd_type_len` (bits 0..32),
//! `olinfo_status` (bits 32..64). Write-back puts `status` in bits 32..64.

pub const DESC_SIZE: usize = 16;
pub const ADDR_WORD: usize = 0;
pub const STATUS_WORD: usize = 8;

pub const RXD_STAT_DD: u32 = 0x01;
pub const RXD_STAT_EOP: u32 = 0x02;

pub const TXD_DCMD_EOP: u32 = 0x0100_0000;
pub const TXD_DCMD_IFCS: u32 = 0x0200_0000;
pub const TXD_DCMD_RS: u32 = 0x0800_0000;
pub const TXD_DCMD_DEXT: u32 = 0x2000_0000;
pub const TXD_DTYP_DATA: u32 = 0x0030_0000;
pub const TXD_PAYLEN_SHIFT: u32 = 14;
pub const TXD_LEN_MASK: u32 = 0x0000_FFFF;
pub const TXD_STAT_DD: u32 = 0x01;

#[inline]
pub const fn rx_writeback(status: u32, length: u16) -> u64 {
    status as u64 | (length as u64) << 32
}

/// Returns `(status, length)` of a receive write-back word.
#[inline]
pub const fn rx_status(word: u64) -> (u32, u16) {
    (word as u32, (word >> 32) as u16)
}

/// Control word for a single-buffer data descriptor of `len` bytes.
#[inline]
pub const fn tx_command(len: u16) -> u64 {
    let cmd_type_len =
        TXD_DCMD_EOP | TXD_DCMD_RS | TXD_DCMD_IFCS | TXD_DCMD_DEXT | TXD_DTYP_DATA | len as u32;
    let olinfo_status = (len as u32) << TXD_PAYLEN_SHIFT;
    cmd_type_len as u64 | (olinfo_status as u64) << 32
}

#[inline]
pub const fn tx_length(word: u64) -> u16 {
    (word as u32 & TXD_LEN_MASK) as u16
}

#[inline]
pub const fn tx_done(word: u64) -> bool {
    (word >> 32) as u32 & TXD_STAT_DD != 0
}

#[inline]
pub const fn tx_writeback(word: u64) -> u64 {
    (word & 0xFFFF_FFFF) | (TXD_STAT_DD as u64) << 32
}
