//! Config-driven stages: ingest, train-base, train-fair, audit, report.
//!
//! All artifacts live under the configured output directory and are listed
//! with their content hashes in `manifest.json`. Each stage stamps its
//! artifacts with a config hash and refuses prerequisites stamped with a
//! different one.

mod config;
mod manifest;
mod stages;
mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::audit::AuditError;
use crate::base::BaseError;
use crate::data::DataError;
use crate::fair::FairError;
use crate::nn::NnError;

pub use config::{load_config, AuditTarget, DatasetKind, RunConfig};
pub use manifest::{file_sha256, Manifest, OutputLock, StageRecord, LOCK_FILE, MANIFEST_FILE};
pub use stages::{evaluate, run_all, run_stage, Evaluation, MergedReport, StageOutcome};
pub use synthetic::{generate_synthetic, PlantedAttribute, SyntheticConfig};

/// Overrides the worker thread count.
pub const THREADS_ENV: &str = "FAIRGO_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("missing prerequisite {0}; run the earlier stage first")]
    MissingPrerequisite(PathBuf),
    #[error("{path} was produced under hash {found}, expected {expected}")]
    HashMismatch { path: PathBuf, expected: String, found: String },
    #[error("invalid parameter: {0}")]
    ParamInvalid(String),
    #[error("output directory is locked: {0} exists")]
    Locked(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Base(#[from] BaseError),
    #[error(transparent)]
    Fair(#[from] FairError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    TrainBase,
    TrainFair,
    Audit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Self::Ingest, Self::TrainBase, Self::TrainFair, Self::Audit, Self::Report];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ingest => "ingest",
            Self::TrainBase => "train-base",
            Self::TrainFair => "train-fair",
            Self::Audit => "audit",
            Self::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| PipelineError::ConfigInvalid(format!("unknown stage {s:?}")))
    }
}

/// Worker threads: `FAIRGO_THREADS` when set to a positive integer, else the
/// available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
