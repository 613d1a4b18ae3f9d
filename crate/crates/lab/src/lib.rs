//! File formats, a parallel sweep driver and the `storage-scaling-lab`
//! command-line tool on top of `storage-scaling-core`.

use std::path::PathBuf;

pub mod cli;
pub mod io;
pub mod sweep;

pub use storage_scaling_core as core;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] storage_scaling_core::Error),
}

impl LabError {
    /// 1 for numerical failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        use storage_scaling_core::Error as E;
        match self {
            LabError::Core(E::SingularSystem | E::BracketFailure { .. } | E::DegenerateDof { .. })
            | LabError::Core(E::DegenerateFit | E::PlanNotConverged { .. }) => 1,
            _ => 2,
        }
    }
}
