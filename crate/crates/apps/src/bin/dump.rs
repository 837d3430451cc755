//! Prints link state, queue registers and statistics of one port.

#![forbid(unsafe_code)]

use std::process::ExitCode;

use clap::Parser;
use nicdrv::{DeviceSpec, ModelConfig};
use nicdrv_apps::cli::{finish, init_logging, model_platform, parse_spec};
use nicdrv_apps::dump::dump_device;
use nicdrv_apps::AppError;

#[derive(Parser, Debug)]
#[command(about = "Dump device registers and statistics (reading clears the counters)")]
struct Args {
    #[arg(long, value_parser = parse_spec)]
    dev: DeviceSpec,
}

fn run(args: Args) -> Result<(), AppError> {
    let platform = model_platform(&[args.dev], ModelConfig::default());
    let handle = platform.open(args.dev)?;
    println!("{}", dump_device(&handle)?);
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    finish(run(Args::parse()))
}
