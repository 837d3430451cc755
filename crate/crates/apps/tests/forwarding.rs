use std::time::Duration;

use nicdrv::{DriverConfig, IxgbeDevice, ModelConfig, ModelSystem, NetDevice, Platform};
use nicdrv_apps::dump::dump_device;
use nicdrv_apps::frame::{seq16, FrameBuilder};
use nicdrv_apps::{run_forwarder, Forwarder, ForwarderConfig};

fn setup(cfg: ModelConfig) -> (ModelSystem, Platform, Forwarder) {
    setup_with(cfg, 48)
}

fn setup_with(cfg: ModelConfig, touch: usize) -> (ModelSystem, Platform, Forwarder) {
    let sys = ModelSystem::new(2, cfg);
    let platform = Platform::with_models(sys.clone());
    let a = IxgbeDevice::init(&platform.open_device("model:0").unwrap(), DriverConfig::default()).unwrap();
    let b = IxgbeDevice::init(&platform.open_device("model:1").unwrap(), DriverConfig::default()).unwrap();
    (sys, platform, Forwarder::new(a, b, 32, touch).unwrap())
}

fn quiet() -> ModelConfig {
    ModelConfig {
        access_log: false,
        ..ModelConfig::default()
    }
}

fn pump(sys: &ModelSystem, fwd: &mut Forwarder, captured: &mut Vec<nicdrv::model::WireFrame>) {
    loop {
        sys.step_all(256);
        let n = fwd.poll_once().unwrap();
        sys.step_all(256);
        captured.extend(sys.nics()[1].take_capture());
        if n == 0 && sys.nics()[0].pending() == 0 {
            break;
        }
    }
}

#[test]
fn ten_thousand_frames_arrive_intact_and_in_order() {
    let (sys, _p, mut fwd) = setup(quiet());
    let builder = FrameBuilder::new(64, 2048, 9).unwrap();
    let mut sent = Vec::new();
    let mut captured = Vec::new();
    for k in 0..10_000u64 {
        let f = builder.build(k, k);
        sys.nics()[0].inject(&f).unwrap();
        sent.push(f);
        if k % 64 == 63 {
            pump(&sys, &mut fwd, &mut captured);
        }
    }
    pump(&sys, &mut fwd, &mut captured);
    assert_eq!(captured.len(), 10_000);
    for (k, (want, got)) in sent.iter().zip(&captured).enumerate() {
        let mut expected = want.clone();
        expected[48] = expected[48].wrapping_add(1);
        assert_eq!(got.data, expected, "frame {k}");
        assert_eq!(seq16(&got.data), Some(k as u16));
    }
    assert_eq!(fwd.a_to_b().tx, 10_000);
    assert_eq!(fwd.a_to_b().app_drops, 0);
    assert_eq!(fwd.b_to_a(), Default::default());
}

#[test]
fn touch_offset_past_the_end_leaves_frame_alone() {
    let (sys, _p, mut fwd) = setup_with(quiet(), 100);
    let f = FrameBuilder::new(60, 2048, 1).unwrap().build(0, 0);
    sys.nics()[0].inject(&f).unwrap();
    let mut captured = Vec::new();
    pump(&sys, &mut fwd, &mut captured);
    assert_eq!(captured.len(), 1);
    assert_eq!(captured[0].data, f);
}

#[test]
fn batch_size_is_validated() {
    let (_sys, _p, fwd) = setup(quiet());
    let (a, b) = fwd.into_devices();
    assert!(Forwarder::<nicdrv::arith::Checked>::new(a, b, 0, 48).is_err());
}

#[test]
fn idle_run_prints_one_line_per_device_per_second() {
    let sys = ModelSystem::new(2, quiet());
    let platform = Platform::with_models(sys);
    let mut cfg = ForwarderConfig::new("model:0".parse().unwrap(), "model:1".parse().unwrap());
    cfg.duration = Duration::from_secs(2);
    let mut out = Vec::new();
    let s = run_forwarder(&platform, &cfg, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(s.reports, 2);
    assert_eq!(lines.len(), 4, "{text}");
    for l in &lines {
        assert!(
            l.ends_with("RX: 0.00 Mpps, 0.00 Mbit/s | TX: 0.00 Mpps, 0.00 Mbit/s"),
            "{l}"
        );
    }
    assert_eq!(s.forwarded(), 0);
}

#[test]
fn overload_conserves_every_frame() {
    let sys = ModelSystem::new(2, quiet());
    let platform = Platform::with_models(sys);
    let mut cfg = ForwarderConfig::new("model:0".parse().unwrap(), "model:1".parse().unwrap());
    cfg.duration = Duration::from_millis(500);
    cfg.interval = Duration::from_millis(250);
    cfg.model_load_pps = 20_000_000;
    let s = run_forwarder(&platform, &cfg, &mut std::io::sink()).unwrap();
    assert!(s.injected > 0);
    assert!(s.device_drops > 0, "expected overload drops: {s:?}");
    assert_eq!(
        s.injected,
        s.forwarded() + s.device_drops + s.app_drops(),
        "{s:?}"
    );
    assert_eq!(s.reports, 2);
}

#[test]
fn dump_reports_fresh_and_forwarded_state() {
    let (sys, _p, mut fwd) = setup(quiet());
    let fresh = dump_device(fwd.devices().0.handle()).unwrap();
    assert_eq!(fresh.link_speed, 10_000);
    assert_eq!(fresh.rx_packets, 0);
    assert_eq!(fresh.rx0.tail, 511);

    let builder = FrameBuilder::new(100, 2048, 3).unwrap();
    for k in 0..300 {
        sys.nics()[0].inject(&builder.build(k, 0)).unwrap();
    }
    for _ in 0..20 {
        sys.step_all(64);
        fwd.poll_once().unwrap();
    }
    sys.step_all(512);
    let a = dump_device(fwd.devices().0.handle()).unwrap();
    let b = dump_device(fwd.devices().1.handle()).unwrap();
    assert_eq!(a.rx_packets, 300);
    assert_eq!(a.rx_bytes, 300 * 100);
    assert_eq!(b.tx_packets, 300);
    assert_eq!(b.tx_bytes, 300 * 100);
    // Counters clear on read.
    let again = dump_device(fwd.devices().0.handle()).unwrap();
    assert_eq!(again.rx_packets, 0);
    let (dev_a, _) = fwd.devices_mut();
    assert_eq!(dev_a.read_stats().unwrap().rx_packets, 0);
    let text = a.to_string();
    assert!(text.contains("link        up, 10000 Mbit/s"));
    assert!(text.contains("rx packets  300"));
}
