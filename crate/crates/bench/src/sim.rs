//! Deterministic forwarding runs on a model NIC pair.
//!
//! Everything runs on one thread against the shared virtual clock. Frame
//! `k` arrives at `t0 + k * 1e9 / pps` ticks; arrivals are injected once
//! the clock has passed them, and when nothing is left to do the clock
//! jumps to the next arrival. Latency is the egress tick minus the arrival
//! tick embedded in the frame.

use nicdrv::arith::Arith;
use nicdrv::ixgbe::regs::{rdt, tdt};
use nicdrv::{DriverConfig, IxgbeDevice, ModelConfig, ModelSystem, Platform};
use nicdrv_apps::forwarder::DEFAULT_TOUCH_OFFSET;
use nicdrv_apps::frame::{self, FrameBuilder};
use nicdrv_apps::{AppError, Forwarder};

pub const TICKS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub batch: usize,
    pub ring: usize,
    pub offered_pps: u64,
    /// Arrival window in model ticks.
    pub duration_ticks: u64,
    pub frame_size: usize,
    pub seed: u64,
    /// Alternate arrivals between the two ports instead of only port A.
    pub bidirectional: bool,
    pub model: ModelConfig,
}

impl Scenario {
    pub fn new(name: &str, batch: usize, offered_pps: u64, duration_ticks: u64, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            batch,
            ring: nicdrv::ixgbe::DEFAULT_RING_SIZE,
            offered_pps,
            duration_ticks,
            frame_size: frame::MIN_SIZE,
            seed,
            bidirectional: true,
            model: ModelConfig {
                access_log: false,
                seed,
                ..ModelConfig::default()
            },
        }
    }

    pub fn secs(&self) -> f64 {
        self.duration_ticks as f64 / TICKS_PER_SEC as f64
    }

    /// Frames whose arrival falls inside the window.
    pub fn offered(&self) -> u64 {
        let t = self.duration_ticks as u128 * self.offered_pps as u128;
        t.div_ceil(TICKS_PER_SEC as u128) as u64
    }

    fn arrival(&self, k: u64) -> u64 {
        (k as u128 * TICKS_PER_SEC as u128 / self.offered_pps as u128) as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimResult {
    pub offered: u64,
    pub forwarded: u64,
    pub dev_drops: u64,
    pub app_drops: u64,
    /// Per forwarded frame, in ticks, in egress order.
    pub latencies: Vec<u64>,
    /// Ticks from the first arrival slot to the last egress.
    pub elapsed_ticks: u64,
    /// RDT and TDT writes on both NICs.
    pub tail_writes: u64,
    /// Largest number of buffers out of each rx pool at once.
    pub peak_in_use: [usize; 2],
    pub pool_capacity: usize,
    /// Egress frames whose bytes differ from what was injected.
    pub corrupted: u64,
}

impl SimResult {
    /// Forwarded frames per second of virtual time.
    pub fn rate_pps(&self) -> f64 {
        if self.elapsed_ticks == 0 {
            return 0.0;
        }
        self.forwarded as f64 * TICKS_PER_SEC as f64 / self.elapsed_ticks as f64
    }

    pub fn tail_writes_per_packet(&self) -> f64 {
        if self.forwarded == 0 {
            return 0.0;
        }
        self.tail_writes as f64 / self.forwarded as f64
    }
}

pub fn simulate<A: Arith>(sc: &Scenario) -> Result<SimResult, AppError> {
    let sys = ModelSystem::new(2, sc.model.clone());
    let platform = Platform::with_models(sys.clone());
    let driver = DriverConfig {
        ring_size: sc.ring,
        max_batch: sc.batch,
        ..DriverConfig::default()
    };
    let a = IxgbeDevice::init(&platform.open_device("model:0")?, driver.clone())?;
    let b = IxgbeDevice::init(&platform.open_device("model:1")?, driver.clone())?;
    let mut fwd = Forwarder::<A>::new(a, b, sc.batch, DEFAULT_TOUCH_OFFSET)?;
    let builder = FrameBuilder::new(sc.frame_size, sc.model.max_frame, sc.seed)?;
    let nics = sys.nics();
    let clock = sys.clock();
    let tails_before: u64 = nics
        .iter()
        .map(|n| n.writes_at(rdt(0)) + n.writes_at(tdt(0)))
        .sum();
    {
        let (a, b) = fwd.devices();
        for d in [a, b] {
            d.rx_pool(0).expect("queue 0").reset_peak();
        }
    }

    let offered = if sc.offered_pps == 0 { 0 } else { sc.offered() };
    let t0 = clock.now();
    let mut res = SimResult {
        offered,
        latencies: Vec::with_capacity(offered as usize),
        ..SimResult::default()
    };
    let mut last_egress = t0;
    let mut k = 0u64;
    let mut collect = |res: &mut SimResult| {
        for nic in nics {
            for f in nic.take_capture() {
                let sent = frame::tick(&f.data).expect("test frame");
                let seq = frame::seq16(&f.data).expect("test frame") as u64;
                res.latencies.push(f.tick - sent);
                last_egress = last_egress.max(f.tick);
                let mut want = builder.build(seq, sent);
                if let Some(byte) = want.get_mut(DEFAULT_TOUCH_OFFSET) {
                    *byte = byte.wrapping_add(1);
                }
                if f.data != want {
                    res.corrupted += 1;
                }
            }
        }
    };
    loop {
        let now = clock.now();
        while k < offered && t0 + sc.arrival(k) <= now {
            let at = t0 + sc.arrival(k);
            let port = if sc.bidirectional { (k % 2) as usize } else { 0 };
            nics[port]
                .inject_at(at, builder.build(k, at))
                .expect("valid frame");
            k += 1;
        }
        sys.step_all(usize::MAX);
        let got = fwd.poll_once()?;
        sys.step_all(usize::MAX);
        collect(&mut res);
        if got == 0 {
            if k < offered {
                clock.advance_to(t0 + sc.arrival(k));
            } else {
                // The wire is empty, the rx rings are empty and stepping
                // completed every queued transmit.
                break;
            }
        }
    }
    fwd.clean_tx();

    let (ab, ba) = (fwd.a_to_b(), fwd.b_to_a());
    res.forwarded = ab.tx + ba.tx;
    res.app_drops = ab.app_drops + ba.app_drops;
    res.dev_drops = nics.iter().map(|n| n.counters().device_drops()).sum();
    res.tail_writes = nics
        .iter()
        .map(|n| n.writes_at(rdt(0)) + n.writes_at(tdt(0)))
        .sum::<u64>()
        - tails_before;
    res.elapsed_ticks = last_egress - t0;
    let (a, b) = fwd.devices();
    res.peak_in_use = [a, b].map(|d| d.rx_pool(0).expect("queue 0").peak_in_use());
    res.pool_capacity = a.rx_pool(0).expect("queue 0").capacity();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nicdrv::arith::Checked;

    #[test]
    fn offered_count_covers_the_window() {
        let s = Scenario::new("t", 32, 3, TICKS_PER_SEC, 1);
        // Arrivals at 0, 1/3 s and 2/3 s.
        assert_eq!(s.offered(), 3);
        let s = Scenario::new("t", 32, 29_760_000, 2_000_000, 1);
        assert_eq!(s.offered(), 59_520);
    }

    #[test]
    fn zero_load_forwards_nothing() {
        let r = simulate::<Checked>(&Scenario::new("idle", 32, 0, 1_000_000, 1)).unwrap();
        assert_eq!(r.forwarded, 0);
        assert_eq!(r.offered, 0);
        assert!(r.latencies.is_empty());
    }

    #[test]
    fn light_load_latency_is_one_round_trip() {
        let mut s = Scenario::new("light", 32, 100_000, 1_000_000, 1);
        s.bidirectional = false;
        let r = simulate::<Checked>(&s).unwrap();
        assert_eq!(r.forwarded, 100);
        assert_eq!(r.corrupted, 0);
        // rx descriptor, RDT write, TDT write, tx descriptor.
        let c = &s.model;
        let one = 2 * c.desc_cost + 2 * c.mmio_cost;
        assert!(r.latencies.iter().all(|&l| l == one), "{:?}", &r.latencies[..5]);
    }
}
