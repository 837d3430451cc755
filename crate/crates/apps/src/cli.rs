//! Pieces shared by the command line tools.

use std::process::ExitCode;

use log::error;
use nicdrv::{DeviceSpec, ModelConfig, ModelSystem, Platform};

use crate::AppError;

/// Exit status for runtime failures. Usage errors exit with 2 through clap.
pub const EXIT_RUNTIME: u8 = 1;

pub fn parse_spec(s: &str) -> Result<DeviceSpec, String> {
    s.parse().map_err(|e: nicdrv::PlatformError| e.to_string())
}

/// A platform holding enough model NICs for every `model:<n>` in `specs`.
/// The NICs are not wired to each other; callers that want a link call
/// `ModelNic::connect` themselves.
pub fn model_platform(specs: &[DeviceSpec], config: ModelConfig) -> Platform {
    let n = specs
        .iter()
        .filter_map(|s| match s {
            DeviceSpec::Model(i) => Some(i + 1),
            DeviceSpec::Pci(_) => None,
        })
        .max();
    match n {
        Some(n) => Platform::with_models(ModelSystem::new(n.max(2), config)),
        None => Platform::new(),
    }
}

pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
}

pub fn finish(result: Result<(), AppError>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                error!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
