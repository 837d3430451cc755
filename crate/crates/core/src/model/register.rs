use std::collections::{HashMap, VecDeque};

use crate::ixgbe::regs::*;

/// Test-scripted behaviour of one model register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegisterBehavior {
    /// Plain storage starting at the given value.
    Plain(u32),
    /// Returns the value once, then reads as zero until written.
    ReadClear(u32),
    /// Bits in `mask` read as clear until the `reads`-th read, and as set
    /// from then on.
    SetAfterReads { mask: u32, reads: u32 },
    /// Successive reads return successive values; the last one sticks.
    Sequence(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Plain,
    ReadClear,
}

#[derive(Debug, Clone)]
enum Script {
    SetAfterReads { mask: u32, remaining: u32 },
    Sequence(VecDeque<u32>),
}

#[derive(Debug, Clone)]
struct Register {
    value: u32,
    kind: Kind,
    script: Option<Script>,
}

/// Sparse register map. Offsets outside the modelled subset are unknown.
#[derive(Debug, Clone)]
pub(crate) struct RegisterFile {
    regs: HashMap<u32, Register>,
}

fn modelled() -> Vec<(usize, Kind, u32)> {
    use Kind::*;
    let mut v = vec![
        (CTRL, Plain, 0),
        (STATUS, Plain, 0),
        (CTRL_EXT, Plain, 0),
        (EIMC, Plain, 0),
        (EEC, Plain, EEC_ARD),
        (RDRXCTL, Plain, RDRXCTL_DMAIDONE),
        (RXCTRL, Plain, 0),
        (HLREG0, Plain, 0),
        (AUTOC, Plain, 0),
        (LINKS, Plain, LINKS_UP | LINKS_SPEED_10G_82599),
        (RTTDCS, Plain, 0),
        (DMATXCTL, Plain, 0),
        (FCTRL, Plain, 0),
        (DTXMXSZRQ, Plain, 0),
        (GPRC, ReadClear, 0),
        (GPTC, ReadClear, 0),
        (GORCL, ReadClear, 0),
        (GORCH, ReadClear, 0),
        (GOTCL, ReadClear, 0),
        (GOTCH, ReadClear, 0),
        (rdbal(0), Plain, 0),
        (rdbah(0), Plain, 0),
        (rdlen(0), Plain, 0),
        (rdh(0), Plain, 0),
        (rdt(0), Plain, 0),
        (rxdctl(0), Plain, 0),
        (srrctl(0), Plain, 2),
        (dca_rxctrl(0), Plain, 1 << 12),
        (tdbal(0), Plain, 0),
        (tdbah(0), Plain, 0),
        (tdlen(0), Plain, 0),
        (tdh(0), Plain, 0),
        (tdt(0), Plain, 0),
        (txdctl(0), Plain, 0),
    ];
    for i in 0..8 {
        v.push((rxpbsize(i), Plain, 0));
        v.push((txpbsize(i), Plain, 0));
        v.push((mpc(i), ReadClear, 0));
    }
    v
}

impl RegisterFile {
    pub(crate) fn reset() -> Self {
        let regs = modelled()
            .into_iter()
            .map(|(off, kind, value)| {
                (
                    off as u32,
                    Register {
                        value,
                        kind,
                        script: None,
                    },
                )
            })
            .collect();
        Self { regs }
    }

    pub(crate) fn is_known(&self, offset: u32) -> bool {
        self.regs.contains_key(&offset)
    }

    /// Device-visible read with side effects (read-clear, scripts).
    pub(crate) fn read(&mut self, offset: u32) -> Option<u32> {
        let reg = self.regs.get_mut(&offset)?;
        let value = match reg.script.as_mut() {
            Some(Script::SetAfterReads { mask, remaining }) => {
                *remaining = remaining.saturating_sub(1);
                if *remaining == 0 {
                    reg.value |= *mask;
                    reg.script = None;
                    reg.value
                } else {
                    reg.value & !*mask
                }
            }
            Some(Script::Sequence(values)) => {
                let next = values.pop_front().unwrap_or(reg.value);
                if values.is_empty() {
                    reg.script = None;
                }
                reg.value = next;
                next
            }
            None => reg.value,
        };
        if reg.kind == Kind::ReadClear {
            reg.value = 0;
        }
        Some(value)
    }

    /// Current value without side effects (engine use only).
    pub(crate) fn peek(&self, offset: usize) -> u32 {
        self.regs.get(&(offset as u32)).map_or(0, |r| r.value)
    }

    /// Stores a value (engine or driver write).
    pub(crate) fn set(&mut self, offset: usize, value: u32) {
        if let Some(reg) = self.regs.get_mut(&(offset as u32)) {
            reg.value = value;
        }
    }

    /// Adds to a counter register, saturating like the hardware counters.
    pub(crate) fn bump(&mut self, offset: usize, by: u32) {
        if let Some(reg) = self.regs.get_mut(&(offset as u32)) {
            reg.value = reg.value.saturating_add(by);
        }
    }

    /// Adds to a 64-bit counter split over two registers.
    pub(crate) fn bump_wide(&mut self, lo: usize, hi: usize, by: u64) {
        let v = (self.peek(lo) as u64 | (self.peek(hi) as u64) << 32).saturating_add(by);
        self.set(lo, v as u32);
        self.set(hi, (v >> 32) as u32);
    }

    pub(crate) fn script(&mut self, offset: u32, behavior: RegisterBehavior) -> bool {
        let Some(reg) = self.regs.get_mut(&offset) else {
            return false;
        };
        match behavior {
            RegisterBehavior::Plain(v) => {
                reg.kind = Kind::Plain;
                reg.value = v;
                reg.script = None;
            }
            RegisterBehavior::ReadClear(v) => {
                reg.kind = Kind::ReadClear;
                reg.value = v;
                reg.script = None;
            }
            RegisterBehavior::SetAfterReads { mask, reads } => {
                reg.script = Some(Script::SetAfterReads {
                    mask,
                    remaining: reads,
                });
            }
            RegisterBehavior::Sequence(values) => {
                reg.script = if values.is_empty() {
                    None
                } else {
                    Some(Script::Sequence(values.into()))
                };
            }
        }
        true
    }
}
