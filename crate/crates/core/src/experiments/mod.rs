//! Experiment drivers behind the `cumgan` command line.
//!
//! Each driver takes a fully resolved options struct and returns a report;
//! [`cli`] maps flags and config files onto those options and reports onto
//! exit codes (0 pass, 1 failure, 2 usage).

pub mod cli;
pub mod config;
pub mod converge;
pub mod covariance;
pub mod divcheck;
pub mod ring;
pub mod ring8;

use std::path::Path;

use thiserror::Error;

pub use config::{ConfigFile, List, SEED_ENV};
pub use converge::{run_converge, ConvergeOptions, ConvergeReport, SigmaSpec};
pub use covariance::{run_covariance, CovarianceOptions, CovarianceReport, SweepPoint};
pub use divcheck::{run_divcheck, DivcheckOptions, DivcheckRecord, DivcheckReport, GaussianPair};
pub use ring::{mode_coverage, ModeCoverageReport, RingMixtureSpec};
pub use ring8::{run_ring8, Ring8Options, Ring8Report};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}
