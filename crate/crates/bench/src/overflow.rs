//! Cost of overflow-checked counter arithmetic in the forwarding loop.
//!
//! Virtual time does not see CPU work, so this is the one measurement taken
//! in wall-clock time: the same simulated run with the forwarder built for
//! checked and for wrapping counters, trials interleaved, best of each kept.

use std::time::Instant;

use nicdrv::arith::{Arith, Checked, Wrapping};

use crate::sim::{simulate, Scenario};
use crate::BenchError;

pub const DEFAULT_BATCH: usize = 8;
pub const DEFAULT_TRIALS: usize = 5;
/// Smallest noise band, as a fraction of the rate.
pub const MIN_NOISE: f64 = 0.02;

pub const HEADER: [&str; 9] = [
    "scenario",
    "batch",
    "trials",
    "rate_on_pps",
    "rate_off_pps",
    "delta_raw",
    "noise_band",
    "delta",
    "note",
];

#[derive(Debug, Clone, PartialEq)]
pub struct OverflowReport {
    pub scenario: String,
    pub batch: usize,
    pub trials: usize,
    pub rate_on: f64,
    pub rate_off: f64,
    /// `(rate_off - rate_on) / rate_off` as measured.
    pub delta_raw: f64,
    pub noise_band: f64,
    /// `delta_raw`, or 0 when it lies inside the noise band or is negative.
    pub delta: f64,
    pub note: &'static str,
}

fn wall_rate<A: Arith>(sc: &Scenario) -> Result<f64, BenchError> {
    let start = Instant::now();
    let r = simulate::<A>(sc)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(r.forwarded as f64 / secs.max(1e-9))
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

/// Applies the reporting rule to a measured delta.
pub fn classify(delta_raw: f64, noise_band: f64) -> (f64, &'static str) {
    if delta_raw.abs() <= noise_band {
        (0.0, "within noise")
    } else if delta_raw < 0.0 {
        (0.0, "negative beyond noise, clamped")
    } else {
        (delta_raw, "")
    }
}

/// Compares `On` against `Off` over `trials` interleaved pairs.
pub fn compare<On: Arith, Off: Arith>(sc: &Scenario, trials: usize) -> Result<OverflowReport, BenchError> {
    if trials == 0 {
        return Err(BenchError::Invalid("need at least one trial".into()));
    }
    // Untimed warm-up of both variants.
    simulate::<On>(sc)?;
    simulate::<Off>(sc)?;
    let mut on = Vec::with_capacity(trials);
    let mut off = Vec::with_capacity(trials);
    for i in 0..trials {
        // Alternate which variant goes first so warm-up favours neither.
        if i % 2 == 0 {
            on.push(wall_rate::<On>(sc)?);
            off.push(wall_rate::<Off>(sc)?);
        } else {
            off.push(wall_rate::<Off>(sc)?);
            on.push(wall_rate::<On>(sc)?);
        }
    }
    let best = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (rate_on, rate_off) = (best(&on), best(&off));
    let delta_raw = (rate_off - rate_on) / rate_off;
    let noise_band = spread(&on).max(spread(&off)).max(MIN_NOISE);
    let (delta, note) = classify(delta_raw, noise_band);
    Ok(OverflowReport {
        scenario: format!("{}-vs-{}", On::NAME, Off::NAME),
        batch: sc.batch,
        trials,
        rate_on,
        rate_off,
        delta_raw,
        noise_band,
        delta,
        note,
    })
}

pub fn overflow_cost(sc: &Scenario, trials: usize) -> Result<OverflowReport, BenchError> {
    compare::<Checked, Wrapping>(sc, trials)
}

/// Both sides checked: any delta is measurement noise.
pub fn control(sc: &Scenario, trials: usize) -> Result<OverflowReport, BenchError> {
    compare::<Checked, Checked>(sc, trials)
}

pub fn write_reports<W: std::io::Write>(w: W, reports: &[OverflowReport]) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in reports {
        out.write_record([
            r.scenario.clone(),
            r.batch.to_string(),
            r.trials.to_string(),
            format!("{:.0}", r.rate_on),
            format!("{:.0}", r.rate_off),
            format!("{:.6}", r.delta_raw),
            format!("{:.6}", r.noise_band),
            format!("{:.6}", r.delta),
            r.note.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reporting_rule() {
        assert_eq!(classify(0.01, 0.02), (0.0, "within noise"));
        assert_eq!(classify(-0.015, 0.02), (0.0, "within noise"));
        assert_eq!(classify(-0.3, 0.02), (0.0, "negative beyond noise, clamped"));
        assert_eq!(classify(0.04, 0.02), (0.04, ""));
    }

    #[test]
    fn spread_of_equal_values_is_zero() {
        assert_eq!(spread(&[3.0, 3.0]), 0.0);
        assert_eq!(spread(&[10.0, 9.0]), 0.1);
    }
}
