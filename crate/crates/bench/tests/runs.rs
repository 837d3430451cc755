use nicdrv::arith::Checked;
use nicdrv_bench::latency::LatencyDistribution;
use nicdrv_bench::overflow;
use nicdrv_bench::sim::{simulate, Scenario};
use nicdrv_bench::sweep::{measure_latency, sweep_batches, SweepConfig};

#[test]
fn every_sweep_record_conserves_frames() {
    let mut cfg = SweepConfig::new(3);
    cfg.sizes = vec![1, 4, 32, 256];
    cfg.duration_ticks = 500_000;
    for (rec, r) in sweep_batches(&cfg).unwrap() {
        assert_eq!(r.offered, rec.offered(), "batch {}", rec.batch);
        assert_eq!(r.corrupted, 0);
        assert_eq!(rec.latency.len() as u64, rec.forwarded);
    }
}

#[test]
fn duplicate_sizes_run_once() {
    let mut cfg = SweepConfig::new(3);
    cfg.sizes = vec![8, 8, 2];
    cfg.duration_ticks = 100_000;
    let out = sweep_batches(&cfg).unwrap();
    assert_eq!(out.iter().map(|(r, _)| r.batch).collect::<Vec<_>>(), vec![2, 8]);
}

#[test]
fn low_load_p99_within_one_batch_service() {
    let (rec, _) = measure_latency(1_000_000, 0.002, 32, 1).unwrap();
    let c = nicdrv::ModelConfig::default();
    // A full batch of descriptors in each direction plus the two tail writes.
    let bound = 32 * 2 * c.desc_cost + 2 * c.mmio_cost;
    let p99 = rec.latency.quantile_ppm(990_000).unwrap();
    assert!(p99 <= bound, "p99 {p99} > {bound}");
    assert_eq!(rec.dev_drops + rec.app_drops, 0);
}

#[test]
fn overload_p50_bounded_by_full_buffers() {
    let sc = Scenario::new("overload", 32, 29_760_000, 2_000_000, 1);
    let r = simulate::<Checked>(&sc).unwrap();
    assert!(r.dev_drops > 0);
    let per_port = r.rate_pps() / 2.0;
    let service_ticks = 1e9 / per_port;
    let d = LatencyDistribution::new(r.latencies.clone());
    let p50 = d.quantile_ppm(500_000).unwrap() as f64;
    assert!(
        p50 <= 1088.0 * service_ticks,
        "p50 {p50} vs service {service_ticks}"
    );
    // Drop-on-full keeps the queue at about one ring, not the whole pool.
    assert!(
        p50 >= 256.0 * service_ticks,
        "p50 {p50} vs service {service_ticks}"
    );
    assert_eq!(d.ccdf(0).unwrap(), 1.0);
}

#[test]
fn control_comparison_reports_zero() {
    let sc = Scenario::new("control", 8, 29_760_000, 2_000_000, 1);
    let r = overflow::control(&sc, 5).unwrap();
    assert_eq!(r.delta, 0.0, "{r:?}");
}
