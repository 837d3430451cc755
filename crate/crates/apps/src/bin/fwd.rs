//! Forwards packets between two ports in both directions.

#![forbid(unsafe_code)]

use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use nicdrv::{DeviceSpec, ModelConfig};
use nicdrv_apps::cli::{finish, init_logging, model_platform, parse_spec};
use nicdrv_apps::{run_forwarder, AppError, ForwarderConfig};

#[derive(Parser, Debug)]
#[command(about = "Bidirectional two-port packet forwarder")]
struct Args {
    /// First port, e.g. 0000:03:00.0 or model:0
    #[arg(long, value_parser = parse_spec)]
    dev_a: DeviceSpec,
    /// Second port
    #[arg(long, value_parser = parse_spec)]
    dev_b: DeviceSpec,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u16).range(1..=256))]
    batch: u16,
    #[arg(long, default_value_t = 512)]
    ring: usize,
    /// Run time in seconds
    #[arg(long, default_value_t = 10)]
    secs: u64,
    /// Byte offset incremented in every forwarded packet
    #[arg(long, default_value_t = 48)]
    touch_offset: usize,
    /// Model ports only: frames per second injected, alternating between the ports
    #[arg(long, default_value_t = 0)]
    model_load: u64,
}

fn run(args: Args) -> Result<(), AppError> {
    let platform = model_platform(
        &[args.dev_a, args.dev_b],
        ModelConfig {
            capture: false,
            access_log: false,
            ..ModelConfig::default()
        },
    );
    let mut cfg = ForwarderConfig::new(args.dev_a, args.dev_b);
    cfg.batch = args.batch as usize;
    cfg.ring_size = args.ring;
    cfg.duration = Duration::from_secs(args.secs);
    cfg.touch_offset = args.touch_offset;
    cfg.model_load_pps = args.model_load;
    let s = run_forwarder(&platform, &cfg, &mut std::io::stdout().lock())?;
    log::info!(
        "forwarded {} packets ({} a->b, {} b->a), {} dropped by the application",
        s.forwarded(),
        s.a_to_b.tx,
        s.b_to_a.tx,
        s.app_drops()
    );
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    finish(run(Args::parse()))
}
