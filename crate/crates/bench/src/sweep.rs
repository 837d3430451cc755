//! Batch-size sweep and latency runs over the simulator.

use log::{info, warn};
use nicdrv::arith::Checked;

use crate::export::{BenchRecord, UNIT_TICKS};
use crate::latency::LatencyDistribution;
use crate::sim::{simulate, Scenario, SimResult, TICKS_PER_SEC};
use crate::BenchError;

pub const MAX_SWEEP_BATCH: usize = 256;
pub const DEFAULT_SIZES: [usize; 9] = [1, 2, 4, 8, 16, 32, 64, 128, 256];
/// Two ports at 10 Gbit/s line rate with minimum-size frames.
pub const SATURATING_PPS: u64 = 29_760_000;
pub const DEFAULT_SWEEP_TICKS: u64 = 2_000_000;

/// Sorts, removes duplicates (with a warning) and range-checks batch sizes.
pub fn normalize_sizes(sizes: &[usize]) -> Result<Vec<usize>, BenchError> {
    if let Some(&bad) = sizes.iter().find(|&&s| !(1..=MAX_SWEEP_BATCH).contains(&s)) {
        return Err(BenchError::Invalid(format!(
            "batch size {bad} outside 1..={MAX_SWEEP_BATCH}"
        )));
    }
    let mut out = sizes.to_vec();
    out.sort_unstable();
    out.dedup();
    if out.len() != sizes.len() {
        warn!("ignoring {} duplicate batch sizes", sizes.len() - out.len());
    }
    Ok(out)
}

pub fn record(sc: &Scenario, r: SimResult) -> BenchRecord {
    BenchRecord {
        scenario: sc.name.clone(),
        batch: sc.batch,
        ring: sc.ring,
        offered_pps: sc.offered_pps,
        secs: sc.secs(),
        forwarded: r.forwarded,
        dev_drops: r.dev_drops,
        app_drops: r.app_drops,
        latency: LatencyDistribution::new(r.latencies),
        unit: UNIT_TICKS,
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub offered_pps: u64,
    pub duration_ticks: u64,
    pub ring: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            offered_pps: SATURATING_PPS,
            duration_ticks: DEFAULT_SWEEP_TICKS,
            ring: nicdrv::ixgbe::DEFAULT_RING_SIZE,
            seed,
        }
    }

    pub fn scenario(&self, batch: usize) -> Scenario {
        let mut sc = Scenario::new(
            &format!("sweep-b{batch}"),
            batch,
            self.offered_pps,
            self.duration_ticks,
            self.seed,
        );
        sc.ring = self.ring;
        sc
    }
}

/// One run per distinct size, ascending. Returns the raw results alongside
/// the records so callers can look at counters the CSV does not carry.
pub fn sweep_batches(cfg: &SweepConfig) -> Result<Vec<(BenchRecord, SimResult)>, BenchError> {
    let mut out = Vec::new();
    for batch in normalize_sizes(&cfg.sizes)? {
        let sc = cfg.scenario(batch);
        let r = simulate::<Checked>(&sc)?;
        info!(
            "batch {batch:>3}: {:.2} Mpps, {:.4} tail writes per packet",
            r.rate_pps() / 1e6,
            r.tail_writes_per_packet()
        );
        out.push((record(&sc, r.clone()), r));
    }
    Ok(out)
}

pub fn measure_latency(
    pps: u64,
    secs: f64,
    batch: usize,
    seed: u64,
) -> Result<(BenchRecord, SimResult), BenchError> {
    if secs.is_nan() || secs <= 0.0 {
        return Err(BenchError::Invalid("duration must be positive".into()));
    }
    let ticks = (secs * TICKS_PER_SEC as f64).round() as u64;
    let sc = Scenario::new(&format!("latency-{pps}pps"), batch, pps, ticks, seed);
    let r = simulate::<Checked>(&sc)?;
    Ok((record(&sc, r.clone()), r))
}
