//! Register offsets and bit definitions for the 82599 subset the driver uses.
//! Values follow the Intel datasheet / `ixgbe_type.h` naming.

#![allow(missing_docs)]

/// Size of BAR0 as mapped by the driver.
pub const BAR0_LEN: usize = 0x80000;

pub const CTRL: usize = 0x00000;
pub const CTRL_LNK_RST: u32 = 0x0000_0008;
pub const CTRL_RST: u32 = 0x0400_0000;
pub const CTRL_RST_MASK: u32 = CTRL_LNK_RST | CTRL_RST;

pub const STATUS: usize = 0x00008;

pub const CTRL_EXT: usize = 0x00018;
pub const CTRL_EXT_NS_DIS: u32 = 0x0001_0000;

pub const EIMC: usize = 0x00888;
pub const EIMC_ALL: u32 = 0x7FFF_FFFF;

pub const EEC: usize = 0x10010;
pub const EEC_ARD: u32 = 0x0000_0200;

pub const RDRXCTL: usize = 0x02F00;
pub const RDRXCTL_CRCSTRIP: u32 = 0x0000_0002;
pub const RDRXCTL_DMAIDONE: u32 = 0x0000_0008;

pub const RXCTRL: usize = 0x03000;
pub const RXCTRL_RXEN: u32 = 0x0000_0001;

pub const fn rxpbsize(i: usize) -> usize {
    0x03C00 + i * 4
}
pub const RXPBSIZE_128KB: u32 = 0x0002_0000;

pub const fn mpc(i: usize) -> usize {
    0x03FA0 + i * 4
}

pub const HLREG0: usize = 0x04240;
pub const HLREG0_TXCRCEN: u32 = 0x0000_0001;
pub const HLREG0_RXCRCSTRP: u32 = 0x0000_0002;
pub const HLREG0_TXPADEN: u32 = 0x0000_0400;

pub const AUTOC: usize = 0x042A0;
pub const AUTOC_LMS_SHIFT: u32 = 13;
pub const AUTOC_LMS_MASK: u32 = 0x7 << AUTOC_LMS_SHIFT;
pub const AUTOC_LMS_10G_SERIAL: u32 = 0x3 << AUTOC_LMS_SHIFT;
pub const AUTOC_10G_PMA_PMD_MASK: u32 = 0x0000_0180;
pub const AUTOC_10G_XAUI: u32 = 0;
pub const AUTOC_AN_RESTART: u32 = 0x0000_1000;

pub const LINKS: usize = 0x042A4;
pub const LINKS_UP: u32 = 0x4000_0000;
pub const LINKS_SPEED_82599: u32 = 0x3000_0000;
pub const LINKS_SPEED_10G_82599: u32 = 0x3000_0000;
pub const LINKS_SPEED_1G_82599: u32 = 0x2000_0000;
pub const LINKS_SPEED_100_82599: u32 = 0x1000_0000;

pub const GPRC: usize = 0x04074;
pub const GPTC: usize = 0x04080;
pub const GORCL: usize = 0x04088;
pub const GORCH: usize = 0x0408C;
pub const GOTCL: usize = 0x04090;
pub const GOTCH: usize = 0x04094;

pub const RTTDCS: usize = 0x04900;
pub const RTTDCS_ARBDIS: u32 = 0x0000_0040;

pub const DMATXCTL: usize = 0x04A80;
pub const DMATXCTL_TE: u32 = 0x0000_0001;

pub const FCTRL: usize = 0x05080;
pub const FCTRL_MPE: u32 = 0x0000_0100;
pub const FCTRL_UPE: u32 = 0x0000_0200;
pub const FCTRL_BAM: u32 = 0x0000_0400;

pub const DTXMXSZRQ: usize = 0x08100;

pub const fn txpbsize(i: usize) -> usize {
    0x0CC00 + i * 4
}
pub const TXPBSIZE_40KB: u32 = 0x0000_A000;

// Per-queue receive registers (queues 0..64).
pub const fn rdbal(i: usize) -> usize {
    0x01000 + i * 0x40
}
pub const fn rdbah(i: usize) -> usize {
    0x01004 + i * 0x40
}
pub const fn rdlen(i: usize) -> usize {
    0x01008 + i * 0x40
}
pub const fn rdh(i: usize) -> usize {
    0x01010 + i * 0x40
}
pub const fn rdt(i: usize) -> usize {
    0x01018 + i * 0x40
}
pub const fn rxdctl(i: usize) -> usize {
    0x01028 + i * 0x40
}
pub const RXDCTL_ENABLE: u32 = 0x0200_0000;

pub const fn srrctl(i: usize) -> usize {
    if i <= 15 {
        0x02100 + i * 4
    } else {
        0x01014 + i * 0x40
    }
}
pub const SRRCTL_BSIZEPKT_MASK: u32 = 0x0000_001F;
pub const SRRCTL_DESCTYPE_MASK: u32 = 0x0E00_0000;
pub const SRRCTL_DESCTYPE_ADV_ONEBUF: u32 = 0x0200_0000;
pub const SRRCTL_DROP_EN: u32 = 0x1000_0000;

pub const fn dca_rxctrl(i: usize) -> usize {
    if i <= 15 {
        0x02200 + i * 4
    } else {
        0x0100C + i * 0x40
    }
}

// Per-queue transmit registers.
pub const fn tdbal(i: usize) -> usize {
    0x06000 + i * 0x40
}
pub const fn tdbah(i: usize) -> usize {
    0x06004 + i * 0x40
}
pub const fn tdlen(i: usize) -> usize {
    0x06008 + i * 0x40
}
pub const fn tdh(i: usize) -> usize {
    0x06010 + i * 0x40
}
pub const fn tdt(i: usize) -> usize {
    0x06018 + i * 0x40
}
pub const fn txdctl(i: usize) -> usize {
    0x06028 + i * 0x40
}
pub const TXDCTL_ENABLE: u32 = 0x0200_0000;

/// Hardware queue limit of the 82599.
pub const MAX_QUEUES: usize = 64;
