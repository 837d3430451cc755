//! Throughput report lines.

use std::time::Duration;

use nicdrv::DeviceStats;

/// Preamble, start delimiter and inter-frame gap, counted so that Mbit/s
/// reflect line rate.
pub const WIRE_OVERHEAD: u64 = 20;

fn rates(packets: u64, bytes: u64, secs: f64) -> (f64, f64) {
    if secs <= 0.0 {
        return (0.0, 0.0);
    }
    let mpps = packets as f64 / secs / 1e6;
    let mbit = (bytes + packets * WIRE_OVERHEAD) as f64 * 8.0 / secs / 1e6;
    (mpps, mbit)
}

/// `[<dev>] RX: <mpps> Mpps, <mbit> Mbit/s | TX: <mpps> Mpps, <mbit> Mbit/s`
pub fn format_line(dev: &str, delta: &DeviceStats, elapsed: Duration) -> String {
    let secs = elapsed.as_secs_f64();
    let (rx_mpps, rx_mbit) = rates(delta.rx_packets, delta.rx_bytes, secs);
    let (tx_mpps, tx_mbit) = rates(delta.tx_packets, delta.tx_bytes, secs);
    format!("[{dev}] RX: {rx_mpps:.2} Mpps, {rx_mbit:.2} Mbit/s | TX: {tx_mpps:.2} Mpps, {tx_mbit:.2} Mbit/s")
}
