//! Benchmark runner. The RNG seed for frame payloads comes from
//! `NICDRV_SEED` (default 1).

#![forbid(unsafe_code)]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use nicdrv_bench::export::{write_records, write_samples};
use nicdrv_bench::overflow::{self, write_reports};
use nicdrv_bench::sim::Scenario;
use nicdrv_bench::sweep::{measure_latency, sweep_batches, SweepConfig, DEFAULT_SWEEP_TICKS, SATURATING_PPS};
use nicdrv_bench::BenchError;

const SEED_VAR: &str = "NICDRV_SEED";

#[derive(Parser, Debug)]
#[command(about = "Forwarding benchmarks on the device model")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Forwarding rate and latency for a range of batch sizes
    Sweep {
        /// Comma-separated batch sizes in 1..=256
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256")]
        sizes: Vec<usize>,
        /// Offered load over both ports, frames per second
        #[arg(long, default_value_t = SATURATING_PPS)]
        pps: u64,
        /// Arrival window in seconds of model time
        #[arg(long, default_value_t = DEFAULT_SWEEP_TICKS as f64 / 1e9)]
        secs: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Latency distribution at one load
    Latency {
        #[arg(long)]
        pps: u64,
        #[arg(long)]
        secs: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        /// Summary CSV
        #[arg(long)]
        out: PathBuf,
        /// Per-value sample counts for CCDF plots
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Throughput cost of overflow-checked counters
    Overflow {
        #[arg(long, default_value_t = overflow::DEFAULT_BATCH)]
        batch: usize,
        #[arg(long, default_value_t = overflow::DEFAULT_TRIALS)]
        trials: usize,
        /// Also run the checked-vs-checked control
        #[arg(long)]
        control: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn seed() -> Result<u64, BenchError> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .parse()
            .map_err(|_| BenchError::Invalid(format!("{SEED_VAR}={v:?} is not an integer"))),
        Err(_) => Ok(1),
    }
}

fn ticks(secs: f64) -> Result<u64, BenchError> {
    if !(secs > 0.0 && secs.is_finite()) {
        return Err(BenchError::Invalid(format!("--secs {secs} must be positive")));
    }
    Ok((secs * 1e9).round() as u64)
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, BenchError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(args: Args) -> Result<(), BenchError> {
    let seed = seed()?;
    match args.cmd {
        Cmd::Sweep {
            sizes,
            pps,
            secs,
            out,
        } => {
            let mut cfg = SweepConfig::new(seed);
            cfg.sizes = sizes;
            cfg.offered_pps = pps;
            cfg.duration_ticks = ticks(secs)?;
            let runs = sweep_batches(&cfg)?;
            let records: Vec<_> = runs.into_iter().map(|(r, _)| r).collect();
            write_records(create(&out)?, &records)?;
            info!("wrote {} records to {}", records.len(), out.display());
        }
        Cmd::Latency {
            pps,
            secs,
            batch,
            out,
            samples,
        } => {
            let (rec, res) = measure_latency(pps, secs, batch, seed)?;
            info!(
                "forwarded {} of {} frames, {:.2} Mpps",
                rec.forwarded,
                res.offered,
                res.rate_pps() / 1e6
            );
            if let Some(p) = samples {
                write_samples(create(&p)?, &rec.latency)?;
            }
            write_records(create(&out)?, &[rec])?;
        }
        Cmd::Overflow {
            batch,
            trials,
            control,
            out,
        } => {
            let sc = Scenario::new(
                &format!("overflow-b{batch}"),
                batch,
                SATURATING_PPS,
                DEFAULT_SWEEP_TICKS,
                seed,
            );
            let mut reports = vec![overflow::overflow_cost(&sc, trials)?];
            if control {
                reports.push(overflow::control(&sc, trials)?);
            }
            for r in &reports {
                info!(
                    "{}: delta {:.4} ({}) raw {:.4}",
                    r.scenario, r.delta, r.note, r.delta_raw
                );
            }
            write_reports(create(&out)?, &reports)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
