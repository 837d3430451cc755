//! Bidirectional forwarder: receive a batch on one port, bump one byte in
//! every packet, transmit on the other port.

use std::io::Write;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info};
use nicdrv::arith::{Arith, Checked};
use nicdrv::{DeviceSpec, DeviceStats, DriverConfig, IxgbeDevice, NetDevice, PacketBuffer, Platform};

use crate::frame::FrameBuilder;
use crate::stats::format_line;
use crate::AppError;

pub const DEFAULT_TOUCH_OFFSET: usize = 48;
pub const MAX_BATCH: usize = 256;

/// Counters for one direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DirStats {
    pub rx: u64,
    pub tx: u64,
    pub bytes: u64,
    /// Received but not accepted by the tx ring, returned to the pool.
    pub app_drops: u64,
}

/// The forwarding loop body, generic over the counter arithmetic so the
/// overflow-check cost can be measured in one binary.
pub struct Forwarder<A: Arith = Checked> {
    a: IxgbeDevice,
    b: IxgbeDevice,
    batch: usize,
    touch_offset: usize,
    ab: DirStats,
    ba: DirStats,
    scratch: Vec<PacketBuffer>,
    _arith: PhantomData<A>,
}

impl<A: Arith> Forwarder<A> {
    pub fn new(a: IxgbeDevice, b: IxgbeDevice, batch: usize, touch_offset: usize) -> Result<Self, AppError> {
        if !(1..=MAX_BATCH).contains(&batch) {
            return Err(AppError::Invalid(format!(
                "batch size {batch} outside 1..={MAX_BATCH}"
            )));
        }
        Ok(Self {
            a,
            b,
            batch,
            touch_offset,
            ab: DirStats::default(),
            ba: DirStats::default(),
            scratch: Vec::with_capacity(batch),
            _arith: PhantomData,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// One pass in each direction. Returns packets received.
    pub fn poll_once(&mut self) -> Result<usize, AppError> {
        let n = forward::<A>(
            &mut self.a,
            &mut self.b,
            &mut self.scratch,
            self.batch,
            self.touch_offset,
            &mut self.ab,
        )?;
        let m = forward::<A>(
            &mut self.b,
            &mut self.a,
            &mut self.scratch,
            self.batch,
            self.touch_offset,
            &mut self.ba,
        )?;
        Ok(n + m)
    }

    pub fn a_to_b(&self) -> DirStats {
        self.ab
    }

    pub fn b_to_a(&self) -> DirStats {
        self.ba
    }

    pub fn devices(&self) -> (&IxgbeDevice, &IxgbeDevice) {
        (&self.a, &self.b)
    }

    pub fn devices_mut(&mut self) -> (&mut IxgbeDevice, &mut IxgbeDevice) {
        (&mut self.a, &mut self.b)
    }

    /// Reclaims every completed transmit descriptor on both ports.
    pub fn clean_tx(&mut self) -> usize {
        self.a.clean_tx_all() + self.b.clean_tx_all()
    }

    pub fn into_devices(self) -> (IxgbeDevice, IxgbeDevice) {
        (self.a, self.b)
    }
}

fn forward<A: Arith>(
    rx: &mut IxgbeDevice,
    tx: &mut IxgbeDevice,
    bufs: &mut Vec<PacketBuffer>,
    batch: usize,
    touch_offset: usize,
    dir: &mut DirStats,
) -> Result<usize, AppError> {
    let n = rx.rx_batch(0, bufs, batch)?;
    if n == 0 {
        return Ok(0);
    }
    for buf in bufs.iter_mut() {
        dir.bytes = A::add(dir.bytes, buf.len() as u64);
        if let Some(byte) = buf.get_mut(touch_offset) {
            // The one deliberately wrapping operation: 255 + 1 = 0.
            *byte = byte.wrapping_add(1);
        }
    }
    let sent = tx.tx_batch(0, bufs)?;
    let dropped = bufs.len();
    bufs.clear();
    dir.rx = A::add(dir.rx, n as u64);
    dir.tx = A::add(dir.tx, sent as u64);
    dir.app_drops = A::add(dir.app_drops, dropped as u64);
    Ok(n)
}

#[derive(Debug, Clone)]
pub struct ForwarderConfig {
    pub dev_a: DeviceSpec,
    pub dev_b: DeviceSpec,
    pub batch: usize,
    pub ring_size: usize,
    pub duration: Duration,
    pub interval: Duration,
    pub touch_offset: usize,
    /// Model backend only: frames per second offered, alternating ports.
    pub model_load_pps: u64,
    pub frame_size: usize,
    pub seed: u64,
}

impl ForwarderConfig {
    pub fn new(dev_a: DeviceSpec, dev_b: DeviceSpec) -> Self {
        Self {
            dev_a,
            dev_b,
            batch: nicdrv::ixgbe::DEFAULT_BATCH,
            ring_size: nicdrv::ixgbe::DEFAULT_RING_SIZE,
            duration: Duration::from_secs(10),
            interval: Duration::from_secs(1),
            touch_offset: DEFAULT_TOUCH_OFFSET,
            model_load_pps: 0,
            frame_size: 60,
            seed: 1,
        }
    }

    pub fn driver_config(&self) -> DriverConfig {
        DriverConfig {
            ring_size: self.ring_size,
            max_batch: self.batch,
            ..DriverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub a_to_b: DirStats,
    pub b_to_a: DirStats,
    pub stats_a: DeviceStats,
    pub stats_b: DeviceStats,
    pub reports: usize,
    /// Model backend: frames offered to the two ports.
    pub injected: u64,
    /// Model backend: frames the two devices discarded.
    pub device_drops: u64,
}

impl RunSummary {
    pub fn forwarded(&self) -> u64 {
        self.a_to_b.tx + self.b_to_a.tx
    }

    pub fn app_drops(&self) -> u64 {
        self.a_to_b.app_drops + self.b_to_a.app_drops
    }
}

/// Steps the model NICs and feeds them constant-rate traffic until stopped.
struct Pump {
    stop: Arc<AtomicBool>,
    load_on: Arc<AtomicBool>,
    injected: Arc<AtomicU64>,
    thread: Option<thread::JoinHandle<()>>,
}

impl Pump {
    fn start(platform: &Platform, cfg: &ForwarderConfig) -> Result<Option<Self>, AppError> {
        let Some(sys) = platform.models().cloned() else {
            return Ok(None);
        };
        let targets: Vec<_> = [cfg.dev_a, cfg.dev_b]
            .iter()
            .filter_map(|s| match s {
                DeviceSpec::Model(n) => sys.nic(*n).cloned(),
                DeviceSpec::Pci(_) => None,
            })
            .collect();
        let builder = FrameBuilder::new(cfg.frame_size, sys.nics()[0].config().max_frame, cfg.seed)?;
        let stop = Arc::new(AtomicBool::new(false));
        let load_on = Arc::new(AtomicBool::new(cfg.model_load_pps > 0));
        let injected = Arc::new(AtomicU64::new(0));
        let pps = cfg.model_load_pps;
        let (s, l, inj) = (stop.clone(), load_on.clone(), injected.clone());
        let thread = thread::spawn(move || {
            let start = Instant::now();
            let mut k = 0u64;
            while !s.load(Ordering::Relaxed) {
                if l.load(Ordering::Relaxed) && !targets.is_empty() {
                    let due = (start.elapsed().as_nanos() * pps as u128 / 1_000_000_000) as u64;
                    let burst = due.saturating_sub(k).min(4096);
                    for _ in 0..burst {
                        let nic = &targets[(k % targets.len() as u64) as usize];
                        let f = builder.build(k, sys.clock().now());
                        nic.inject(&f).expect("builder makes valid frames");
                        k += 1;
                    }
                    inj.store(k, Ordering::Relaxed);
                }
                if sys.step_all(256) == 0 {
                    thread::yield_now();
                }
            }
        });
        Ok(Some(Self {
            stop,
            load_on,
            injected,
            thread: Some(thread),
        }))
    }

    fn stop_load(&self) {
        self.load_on.store(false, Ordering::Relaxed);
    }

    fn finish(mut self) -> u64 {
        self.halt();
        self.injected.load(Ordering::Relaxed)
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Pump {
    fn drop(&mut self) {
        self.halt();
    }
}

/// Opens and initializes both devices, forwards for the configured duration
/// printing one stats line per device per interval to `out`, then drains.
pub fn run_forwarder(
    platform: &Platform,
    cfg: &ForwarderConfig,
    out: &mut dyn Write,
) -> Result<RunSummary, AppError> {
    if cfg.duration.is_zero() || cfg.interval.is_zero() {
        return Err(AppError::Invalid("duration and interval must be positive".into()));
    }
    let ha = platform.open(cfg.dev_a)?;
    let hb = platform.open(cfg.dev_b)?;
    let a = IxgbeDevice::init(&ha, cfg.driver_config())?;
    let b = IxgbeDevice::init(&hb, cfg.driver_config())?;
    let mut fwd = Forwarder::<Checked>::new(a, b, cfg.batch, cfg.touch_offset)?;
    let names = [cfg.dev_a.to_string(), cfg.dev_b.to_string()];
    let mut summary = RunSummary::default();
    let pump = Pump::start(platform, cfg)?;
    info!("forwarding {} <-> {} for {:?}", names[0], names[1], cfg.duration);

    let reports_due = (cfg.duration.as_nanos() / cfg.interval.as_nanos()) as usize;
    let start = Instant::now();
    let end = start + cfg.duration;
    let mut last_report = start;
    while summary.reports < reports_due || Instant::now() < end {
        fwd.poll_once()?;
        let now = Instant::now();
        if summary.reports < reports_due && now >= start + cfg.interval * (summary.reports as u32 + 1) {
            let elapsed = now - last_report;
            last_report = now;
            let (a, b) = fwd.devices_mut();
            let (sa, sb) = (a.read_stats()?, b.read_stats()?);
            summary.stats_a += sa;
            summary.stats_b += sb;
            writeln!(out, "{}", format_line(&names[0], &sa, elapsed))?;
            writeln!(out, "{}", format_line(&names[1], &sb, elapsed))?;
            summary.reports += 1;
        }
    }

    if let Some(p) = &pump {
        p.stop_load();
        let mut idle = 0;
        while idle < 1000 {
            let pending: usize = platform
                .models()
                .map_or(0, |m| m.nics().iter().map(|n| n.pending()).sum());
            if fwd.poll_once()? == 0 && pending == 0 {
                idle += 1;
                thread::yield_now();
            } else {
                idle = 0;
            }
        }
    }
    fwd.clean_tx();
    if let Some(p) = pump {
        summary.injected = p.finish();
    }
    let (a, b) = fwd.devices_mut();
    summary.stats_a += a.read_stats()?;
    summary.stats_b += b.read_stats()?;
    summary.a_to_b = fwd.a_to_b();
    summary.b_to_a = fwd.b_to_a();
    if let Some(m) = platform.models() {
        summary.device_drops = [cfg.dev_a, cfg.dev_b]
            .iter()
            .filter_map(|s| match s {
                DeviceSpec::Model(n) => m.nic(*n).map(|nic| nic.counters().device_drops()),
                DeviceSpec::Pci(_) => None,
            })
            .sum();
    }
    debug!("summary: {summary:?}");
    Ok(summary)
}
