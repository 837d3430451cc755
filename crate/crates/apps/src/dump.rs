//! Register dump. Reading the statistics registers clears them, so a dump
//! consumes the counters it prints.

use std::fmt;

use nicdrv::ixgbe::decode_link_speed;
use nicdrv::ixgbe::regs::*;
use nicdrv::mmio::MmioError;
use nicdrv::DeviceHandle;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueRegs {
    pub head: u32,
    pub tail: u32,
    pub len: u32,
    pub ctl: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DumpReport {
    pub device: String,
    pub ctrl: u32,
    pub status: u32,
    pub links: u32,
    pub link_speed: u32,
    pub rxctrl: u32,
    pub fctrl: u32,
    pub rx0: QueueRegs,
    pub tx0: QueueRegs,
    pub rx_packets: u64,
    pub tx_packets: u64,
    pub rx_bytes: u64,
    pub tx_bytes: u64,
    pub rx_missed: u64,
}

pub fn dump_device(handle: &DeviceHandle) -> Result<DumpReport, MmioError> {
    let r = handle.registers();
    let wide = |lo, hi| -> Result<u64, MmioError> {
        let l = r.read32(lo)? as u64;
        Ok(l | (r.read32(hi)? as u64) << 32)
    };
    let links = r.read32(LINKS)?;
    let mut missed = 0;
    for i in 0..8 {
        missed += r.read32(mpc(i))? as u64;
    }
    Ok(DumpReport {
        device: handle.spec().to_string(),
        ctrl: r.read32(CTRL)?,
        status: r.read32(STATUS)?,
        links,
        link_speed: decode_link_speed(links),
        rxctrl: r.read32(RXCTRL)?,
        fctrl: r.read32(FCTRL)?,
        rx0: QueueRegs {
            head: r.read32(rdh(0))?,
            tail: r.read32(rdt(0))?,
            len: r.read32(rdlen(0))?,
            ctl: r.read32(rxdctl(0))?,
        },
        tx0: QueueRegs {
            head: r.read32(tdh(0))?,
            tail: r.read32(tdt(0))?,
            len: r.read32(tdlen(0))?,
            ctl: r.read32(txdctl(0))?,
        },
        rx_packets: r.read32(GPRC)? as u64,
        tx_packets: r.read32(GPTC)? as u64,
        rx_bytes: wide(GORCL, GORCH)?,
        tx_bytes: wide(GOTCL, GOTCH)?,
        rx_missed: missed,
    })
}

impl fmt::Display for DumpReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "device      {}", self.device)?;
        if self.link_speed == 0 {
            writeln!(f, "link        down")?;
        } else {
            writeln!(f, "link        up, {} Mbit/s", self.link_speed)?;
        }
        writeln!(f, "CTRL        {:#010x}", self.ctrl)?;
        writeln!(f, "STATUS      {:#010x}", self.status)?;
        writeln!(f, "LINKS       {:#010x}", self.links)?;
        writeln!(f, "RXCTRL      {:#010x}", self.rxctrl)?;
        writeln!(f, "FCTRL       {:#010x}", self.fctrl)?;
        for (name, q) in [("rx0", &self.rx0), ("tx0", &self.tx0)] {
            writeln!(
                f,
                "{name}         head {} tail {} len {} ctl {:#010x}",
                q.head, q.tail, q.len, q.ctl
            )?;
        }
        writeln!(f, "rx packets  {}", self.rx_packets)?;
        writeln!(f, "rx bytes    {}", self.rx_bytes)?;
        writeln!(f, "rx missed   {}", self.rx_missed)?;
        writeln!(f, "tx packets  {}", self.tx_packets)?;
        write!(f, "tx bytes    {}", self.tx_bytes)
    }
}
