//! CSV output. Column order is fixed; the same records always produce the
//! same bytes.

use std::io::Write;

use crate::latency::LatencyDistribution;
use crate::BenchError;

pub const RECORD_HEADER: [&str; 17] = [
    "scenario",
    "batch",
    "ring",
    "offered_pps",
    "secs",
    "forwarded",
    "dev_drops",
    "app_drops",
    "p50",
    "p90",
    "p99",
    "p999",
    "p9999",
    "p99999",
    "p999999",
    "max",
    "unit",
];

pub const SAMPLES_HEADER: [&str; 2] = ["latency", "count"];

/// Latency columns are model ticks for model runs.
pub const UNIT_TICKS: &str = "vtick";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub scenario: String,
    pub batch: usize,
    pub ring: usize,
    pub offered_pps: u64,
    pub secs: f64,
    pub forwarded: u64,
    pub dev_drops: u64,
    pub app_drops: u64,
    pub latency: LatencyDistribution,
    pub unit: &'static str,
}

impl BenchRecord {
    pub fn offered(&self) -> u64 {
        self.forwarded + self.dev_drops + self.app_drops
    }
}

fn row(r: &BenchRecord) -> Vec<String> {
    let mut v = vec![
        r.scenario.clone(),
        r.batch.to_string(),
        r.ring.to_string(),
        r.offered_pps.to_string(),
        r.secs.to_string(),
        r.forwarded.to_string(),
        r.dev_drops.to_string(),
        r.app_drops.to_string(),
    ];
    match r.latency.summary() {
        Ok(s) => v.extend(s.iter().map(u64::to_string)),
        // No samples: leave the latency cells empty.
        Err(_) => v.extend(std::iter::repeat(String::new()).take(8)),
    }
    v.push(r.unit.to_string());
    v
}

pub fn write_records<W: Write>(w: W, records: &[BenchRecord]) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        out.write_record(row(r))?;
    }
    out.flush()?;
    Ok(())
}

/// One row per distinct latency value, for CCDF plots.
pub fn write_samples<W: Write>(w: W, dist: &LatencyDistribution) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SAMPLES_HEADER)?;
    for (v, c) in dist.histogram() {
        out.write_record([v.to_string(), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, samples: Vec<u64>) -> BenchRecord {
        BenchRecord {
            scenario: name.into(),
            batch: 32,
            ring: 512,
            offered_pps: 1000,
            secs: 0.5,
            forwarded: samples.len() as u64,
            dev_drops: 1,
            app_drops: 0,
            latency: LatencyDistribution::new(samples),
            unit: UNIT_TICKS,
        }
    }

    fn to_string(records: &[BenchRecord]) -> String {
        let mut buf = Vec::new();
        write_records(&mut buf, records).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_input_is_header_only() {
        assert_eq!(
            to_string(&[]),
            "scenario,batch,ring,offered_pps,secs,forwarded,dev_drops,app_drops,\
             p50,p90,p99,p999,p9999,p99999,p999999,max,unit\n"
        );
    }

    #[test]
    fn one_row_per_record() {
        let recs = [rec("a", vec![1, 2, 3]), rec("b", vec![]), rec("c", vec![7])];
        let text = to_string(&recs);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "a,32,512,1000,0.5,3,1,0,2,3,3,3,3,3,3,3,vtick");
        assert_eq!(lines[2], "b,32,512,1000,0.5,0,1,0,,,,,,,,,vtick");
        assert_eq!(text, to_string(&recs));
    }

    #[test]
    fn samples_histogram() {
        let mut buf = Vec::new();
        write_samples(&mut buf, &LatencyDistribution::new(vec![5, 3, 5])).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "latency,count\n3,1\n5,2\n");
    }
}
