use std::time::Duration;

use nicdrv::ixgbe::regs::*;
use nicdrv::mmio::MmioError;
use nicdrv::model::{AccessKind, RegisterBehavior};
use nicdrv::{ModelConfig, ModelSystem, Platform};

fn region() -> (ModelSystem, nicdrv::DeviceHandle) {
    let sys = ModelSystem::new(1, ModelConfig::default());
    let h = Platform::with_models(sys.clone()).open_device("model:0").unwrap();
    (sys, h)
}

#[test]
fn reset_default_and_bounds() {
    let (sys, h) = region();
    let r = h.registers();
    assert_eq!(r.read32(STATUS), Ok(0));
    assert!(matches!(r.read32(r.len()), Err(MmioError::OutOfBounds { .. })));
    assert_eq!(
        r.write32(STATUS + 1, 1),
        Err(MmioError::Misaligned { offset: STATUS + 1 })
    );
    assert_eq!(sys.nics()[0].access_counts().reads, 1);
    assert_eq!(sys.nics()[0].access_counts().writes, 0);
}

#[test]
fn thousand_reads_thousand_accesses() {
    let (sys, h) = region();
    for _ in 0..1000 {
        h.registers().read32(STATUS).unwrap();
    }
    assert_eq!(sys.nics()[0].reads_at(STATUS), 1000);
}

#[test]
fn unread_write_still_reaches_device() {
    let (sys, h) = region();
    h.registers().write32(CTRL_EXT, 0x1234).unwrap();
    assert_eq!(sys.nics()[0].writes_at(CTRL_EXT), 1);
    assert_eq!(h.registers().read32(CTRL_EXT), Ok(0x1234));
}

#[test]
fn set_then_clear_restores() {
    let (sys, h) = region();
    let r = h.registers();
    r.write32(HLREG0, 0b0101).unwrap();
    r.set_flags32(HLREG0, 0b1010).unwrap();
    r.clear_flags32(HLREG0, 0b1010).unwrap();
    assert_eq!(r.read32(HLREG0), Ok(0b0101));
    let c = sys.nics()[0].access_counts_at(HLREG0);
    assert_eq!((c.reads, c.writes), (3, 3));
}

#[test]
fn wait_on_satisfied_register_reads_once() {
    let (sys, h) = region();
    h.registers()
        .wait_set32(EEC, EEC_ARD, Duration::from_secs(1))
        .unwrap();
    assert_eq!(sys.nics()[0].reads_at(EEC), 1);
}

#[test]
fn wait_returns_on_third_read() {
    let (sys, h) = region();
    let nic = &sys.nics()[0];
    nic.script_register(
        LINKS,
        RegisterBehavior::SetAfterReads {
            mask: LINKS_UP,
            reads: 3,
        },
    )
    .unwrap();
    h.registers()
        .wait_set32(LINKS, LINKS_UP, Duration::from_secs(5))
        .unwrap();
    let reads: Vec<_> = nic
        .access_log()
        .into_iter()
        .filter(|a| a.kind == AccessKind::Read && a.offset == LINKS as u64)
        .map(|a| a.value as u32 & LINKS_UP)
        .collect();
    assert_eq!(reads, vec![0, 0, LINKS_UP]);
}

#[test]
fn wait_times_out_on_stuck_bit() {
    let (_sys, h) = region();
    let err = h
        .registers()
        .wait_set32(STATUS, 0x80, Duration::from_millis(10))
        .unwrap_err();
    assert!(matches!(
        err,
        MmioError::Timeout {
            offset: STATUS,
            mask: 0x80,
            ..
        }
    ));
}

#[test]
fn no_value_caching() {
    let (sys, h) = region();
    sys.nics()[0]
        .script_register(STATUS, RegisterBehavior::Sequence(vec![7, 9]))
        .unwrap();
    assert_eq!(h.registers().read32(STATUS), Ok(7));
    assert_eq!(h.registers().read32(STATUS), Ok(9));
}

#[test]
fn scripted_read_clear_counter() {
    let (sys, h) = region();
    sys.nics()[0]
        .script_register(GPRC, RegisterBehavior::ReadClear(7))
        .unwrap();
    assert_eq!(h.registers().read32(GPRC), Ok(7));
    assert_eq!(h.registers().read32(GPRC), Ok(0));
    assert!(sys.nics()[0]
        .script_register(0xFFFFF0, RegisterBehavior::Plain(0))
        .is_err());
}

#[test]
fn log_preserves_order() {
    let (sys, h) = region();
    let r = h.registers();
    let trace = [
        (true, CTRL_EXT, 1),
        (false, STATUS, 0),
        (true, HLREG0, 5),
        (false, CTRL_EXT, 0),
    ];
    for &(write, off, v) in &trace {
        if write {
            r.write32(off, v).unwrap();
        } else {
            r.read32(off).unwrap();
        }
    }
    let log: Vec<_> = sys.nics()[0]
        .access_log()
        .into_iter()
        .map(|a| (a.kind == AccessKind::Write, a.offset as usize))
        .collect();
    let want: Vec<_> = trace.iter().map(|&(w, o, _)| (w, o)).collect();
    assert_eq!(log, want);
}
