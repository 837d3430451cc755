//! Classic pcap export of wire captures, for opening in Wireshark/tcpdump.
//! Timestamps are the model's virtual ticks read as nanoseconds.

use std::io::{self, Write};

use super::WireFrame;

const MAGIC: u32 = 0xa1b2_c3d4;
const SNAPLEN: u32 = 65535;
const LINKTYPE_ETHERNET: u32 = 1;

pub fn write_header<W: Write>(w: &mut W) -> io::Result<()> {
    w.write_all(&MAGIC.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&4u16.to_le_bytes())?;
    w.write_all(&0i32.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&SNAPLEN.to_le_bytes())?;
    w.write_all(&LINKTYPE_ETHERNET.to_le_bytes())
}

pub fn write_record<W: Write>(w: &mut W, frame: &WireFrame) -> io::Result<()> {
    let secs = (frame.tick / 1_000_000_000) as u32;
    let usecs = (frame.tick % 1_000_000_000 / 1000) as u32;
    let len = u32::try_from(frame.data.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let incl = len.min(SNAPLEN);
    w.write_all(&secs.to_le_bytes())?;
    w.write_all(&usecs.to_le_bytes())?;
    w.write_all(&incl.to_le_bytes())?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&frame.data[..incl as usize])
}

pub fn write_pcap<W: Write>(mut w: W, frames: &[WireFrame]) -> io::Result<()> {
    write_header(&mut w)?;
    for f in frames {
        write_record(&mut w, f)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let mut out = Vec::new();
        let f = WireFrame {
            tick: 2_000_003_000,
            data: vec![0xab; 60],
        };
        write_pcap(&mut out, &[f]).unwrap();
        assert_eq!(out.len(), 24 + 16 + 60);
        assert_eq!(&out[..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        assert_eq!(u32::from_le_bytes(out[20..24].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(out[24..28].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(out[28..32].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(out[32..36].try_into().unwrap()), 60);
    }
}
