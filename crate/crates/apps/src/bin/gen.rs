//! Transmits test frames on one port.

#![forbid(unsafe_code)]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{ArgGroup, Parser};
use nicdrv::memory::DEFAULT_ENTRY_SIZE;
use nicdrv::model::pcap::write_pcap;
use nicdrv::{DeviceSpec, DriverConfig, IxgbeDevice, ModelConfig};
use nicdrv_apps::cli::{finish, init_logging, model_platform, parse_spec};
use nicdrv_apps::{run_generator, AppError, FrameBuilder, GenConfig, GenMode};

#[derive(Parser, Debug)]
#[command(about = "Packet generator")]
#[command(group(ArgGroup::new("mode").required(true).args(["count", "rate"])))]
struct Args {
    #[arg(long, value_parser = parse_spec)]
    dev: DeviceSpec,
    /// Send exactly this many frames
    #[arg(long)]
    count: Option<u64>,
    /// Send this many frames per second for --secs seconds
    #[arg(long)]
    rate: Option<u64>,
    #[arg(long, default_value_t = 10)]
    secs: u64,
    /// Frame size in bytes, without FCS
    #[arg(long, default_value_t = 60)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Model ports only: write the transmitted frames to a pcap file
    #[arg(long)]
    pcap: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), AppError> {
    // Reject a bad size before touching the device.
    FrameBuilder::new(args.size, DEFAULT_ENTRY_SIZE, args.seed)?;
    let platform = model_platform(
        &[args.dev],
        ModelConfig {
            access_log: false,
            capture: args.pcap.is_some(),
            ..ModelConfig::default()
        },
    );
    let mode = match (args.count, args.rate) {
        (Some(n), _) => GenMode::Count(n),
        (None, Some(pps)) => GenMode::Rate {
            pps,
            duration: Duration::from_secs(args.secs),
        },
        (None, None) => unreachable!("clap requires one of --count and --rate"),
    };
    let handle = platform.open(args.dev)?;
    let mut dev = IxgbeDevice::init(&handle, DriverConfig::default())?;
    let model = handle.model().cloned();
    let mut pump = || {
        if let Some(m) = &model {
            m.step(256);
        }
    };
    let report = run_generator(&mut dev, &GenConfig::new(args.size, args.seed, mode), &mut pump)?;
    log::info!(
        "sent {} frames of {} bytes in {:.3} s",
        report.sent,
        args.size,
        report.elapsed.as_secs_f64()
    );
    if let Some(path) = args.pcap {
        let Some(m) = model else {
            return Err(AppError::Invalid("--pcap needs a model device".into()));
        };
        let frames = m.take_capture();
        let mut w = BufWriter::new(File::create(&path)?);
        write_pcap(&mut w, &frames)?;
        log::info!("wrote {} frames to {}", frames.len(), path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    finish(run(Args::parse()))
}
