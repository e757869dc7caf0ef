//! Experiment harness: configuration, single runs, sweeps and result files.

pub mod compress;
pub mod config;
pub mod emit;
pub mod run;
pub mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use config::RunConfig;
pub use run::{RunRecord, VERSION};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] pathdisc_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{0}")]
    Json(String),

    #[error("nothing to emit")]
    Empty,
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure means the problem has no feasible point.
    pub fn is_infeasible(&self) -> bool {
        use pathdisc_core::Error as E;
        matches!(
            self,
            BenchError::Core(
                E::InvalidInput(_)
                    | E::Initialization(_)
                    | E::InfeasibleDurations { .. }
                    | E::DiscretizationAccuracy { .. }
            )
        )
    }

    /// Process exit code: 2 config, 3 infeasible, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            e if e.is_infeasible() => 3,
            _ => 1,
        }
    }
}
