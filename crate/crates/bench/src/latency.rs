//! Latency distributions over integer samples (model ticks or ns).

use thiserror::Error;

/// Quantiles reported for every run, in parts per million.
pub const REPORTED_PPM: [u32; 7] = [500_000, 900_000, 990_000, 999_000, 999_900, 999_990, 999_999];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LatencyError {
    #[error("no samples")]
    Empty,
    #[error("quantile {0} ppm outside 0..=1000000")]
    BadQuantile(u32),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LatencyDistribution {
    sorted: Vec<u64>,
}

impl LatencyDistribution {
    pub fn new(mut samples: Vec<u64>) -> Self {
        samples.sort_unstable();
        Self { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[u64] {
        &self.sorted
    }

    /// Nearest-rank quantile: the smallest sample with at least `ppm`
    /// millionths of the samples at or below it. 0 ppm gives the minimum.
    pub fn quantile_ppm(&self, ppm: u32) -> Result<u64, LatencyError> {
        if ppm > 1_000_000 {
            return Err(LatencyError::BadQuantile(ppm));
        }
        let n = self.sorted.len() as u128;
        if n == 0 {
            return Err(LatencyError::Empty);
        }
        let rank = (ppm as u128 * n).div_ceil(1_000_000).max(1);
        Ok(self.sorted[rank as usize - 1])
    }

    pub fn max(&self) -> Result<u64, LatencyError> {
        self.sorted.last().copied().ok_or(LatencyError::Empty)
    }

    /// The [`REPORTED_PPM`] quantiles followed by the maximum.
    pub fn summary(&self) -> Result<[u64; 8], LatencyError> {
        let mut out = [0; 8];
        for (o, p) in out.iter_mut().zip(REPORTED_PPM) {
            *o = self.quantile_ppm(p)?;
        }
        out[7] = self.max()?;
        Ok(out)
    }

    /// P(X > x), the fraction of samples strictly greater than `x`.
    pub fn ccdf(&self, x: u64) -> Result<f64, LatencyError> {
        if self.sorted.is_empty() {
            return Err(LatencyError::Empty);
        }
        let at_or_below = self.sorted.partition_point(|&s| s <= x);
        Ok((self.sorted.len() - at_or_below) as f64 / self.sorted.len() as f64)
    }

    /// `(value, count)` for every distinct value, ascending.
    pub fn histogram(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::new();
        for &s in &self.sorted {
            match out.last_mut() {
                Some((v, c)) if *v == s => *c += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }
}
