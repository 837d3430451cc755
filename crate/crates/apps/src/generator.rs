//! Packet generator: fills frames from its own pool and transmits them
//! either as a fixed count or at a fixed rate.

use std::time::{Duration, Instant};

use log::{debug, warn};
use nicdrv::memory::{default_pool_capacity, Mempool};
use nicdrv::{DeviceStats, IxgbeDevice, NetDevice, PacketBuffer};

use crate::frame::FrameBuilder;
use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenMode {
    /// Exactly this many frames, sequence numbers `0..count`.
    Count(u64),
    /// Paced by wall clock for `duration`.
    Rate { pps: u64, duration: Duration },
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub size: usize,
    pub seed: u64,
    pub batch: usize,
    pub mode: GenMode,
    /// Give up on draining the tx ring after this long.
    pub drain_timeout: Duration,
}

impl GenConfig {
    pub fn new(size: usize, seed: u64, mode: GenMode) -> Self {
        Self {
            size,
            seed,
            batch: nicdrv::ixgbe::DEFAULT_BATCH,
            mode,
            drain_timeout: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenReport {
    pub sent: u64,
    pub elapsed: Duration,
    pub stats: DeviceStats,
    /// Descriptors still owned by the device when draining gave up.
    pub undrained: usize,
}

/// Transmits on queue 0 of `dev`. `pump` is called whenever the generator
/// waits on the device; with the model backend it should step the NICs,
/// with hardware it can do nothing.
pub fn run_generator(
    dev: &mut IxgbeDevice,
    cfg: &GenConfig,
    pump: &mut dyn FnMut(),
) -> Result<GenReport, AppError> {
    if cfg.batch == 0 {
        return Err(AppError::Invalid("batch size must be positive".into()));
    }
    let entry = dev.config().entry_size;
    let builder = FrameBuilder::new(cfg.size, entry, cfg.seed)?;
    let pool = Mempool::allocate(
        dev.handle(),
        default_pool_capacity(dev.config().ring_size, cfg.batch),
        entry,
    )?;
    let clock = dev.handle().model().map(|m| m.clock().clone());
    let start = Instant::now();
    let now_tick = || match &clock {
        Some(c) => c.now(),
        None => start.elapsed().as_nanos() as u64,
    };

    let mut pending: Vec<PacketBuffer> = Vec::with_capacity(cfg.batch);
    let mut next_seq = 0u64;
    let mut sent = 0u64;
    loop {
        let want = match cfg.mode {
            GenMode::Count(n) => n - next_seq,
            GenMode::Rate { pps, duration } => {
                let el = start.elapsed();
                if el >= duration {
                    break;
                }
                let due = (el.as_nanos() * pps as u128 / 1_000_000_000) as u64;
                due.saturating_sub(next_seq)
            }
        };
        if want == 0 && pending.is_empty() {
            if matches!(cfg.mode, GenMode::Count(_)) {
                break;
            }
            pump();
            continue;
        }
        let room = (cfg.batch - pending.len()).min(want.min(usize::MAX as u64) as usize);
        let before = pending.len();
        pool.alloc_batch_into(&mut pending, room);
        for buf in &mut pending[before..] {
            buf.set_len(cfg.size)?;
            builder.write_into(buf, next_seq, now_tick());
            next_seq += 1;
        }
        let n = dev.tx_batch(0, &mut pending)?;
        sent += n as u64;
        if n == 0 || !pending.is_empty() {
            pump();
        }
    }

    let drain_start = Instant::now();
    while dev.tx_in_flight(0) > 0 && drain_start.elapsed() < cfg.drain_timeout {
        pump();
        dev.clean_tx_all();
    }
    let undrained = dev.tx_in_flight(0);
    if undrained > 0 {
        warn!("{undrained} frames still queued after {:?}", cfg.drain_timeout);
    }
    let stats = dev.read_stats()?;
    debug!(
        "generator sent {sent} frames, device counted {}",
        stats.tx_packets
    );
    Ok(GenReport {
        sent,
        elapsed: start.elapsed(),
        stats,
        undrained,
    })
}
