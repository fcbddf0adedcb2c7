//! `manifest.json` and the output-directory lock.
//!
//! ```text
//! {
//!   "format": "fairgo-manifest",
//!   "version": 1,
//!   "stages": {
//!     "<stage>": {
//!       "config_hash": "<hex sha256>",
//!       "seed": <u64>,
//!       "artifacts": { "<path relative to out>": "<hex sha256 of contents>" }
//!     }
//!   }
//! }
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
const MANIFEST_FORMAT: &str = "fairgo-manifest";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            stages: BTreeMap::new(),
        }
    }
}

pub fn file_sha256(path: &Path) -> Result<String, PipelineError> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl Manifest {
    /// The manifest under `out`, or an empty one.
    pub fn load(out: &Path) -> Result<Self, PipelineError> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let manifest: Self = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(PipelineError::ConfigInvalid(format!(
                "{}: unsupported manifest {} v{}",
                path.display(),
                manifest.format,
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, out: &Path) -> Result<(), PipelineError> {
        fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Replaces the record for `stage` with the given artifacts and their
    /// content hashes. Paths are relative to `out`.
    pub fn record(
        &mut self,
        stage: Stage,
        config_hash: &str,
        seed: u64,
        out: &Path,
        artifacts: &[PathBuf],
    ) -> Result<(), PipelineError> {
        let mut hashes = BTreeMap::new();
        for rel in artifacts {
            hashes.insert(rel.to_string_lossy().replace('\\', "/"), file_sha256(&out.join(rel))?);
        }
        self.stages.insert(
            stage.as_str().to_string(),
            StageRecord {
                config_hash: config_hash.to_string(),
                seed,
                artifacts: hashes,
            },
        );
        Ok(())
    }

    /// Checks that `stage` ran under `expected_hash` and that its artifacts
    /// are unchanged on disk.
    pub fn require(&self, stage: Stage, expected_hash: &str, out: &Path) -> Result<&StageRecord, PipelineError> {
        let record = self
            .stages
            .get(stage.as_str())
            .ok_or_else(|| PipelineError::MissingPrerequisite(out.join(stage.as_str())))?;
        if record.config_hash != expected_hash {
            return Err(PipelineError::HashMismatch {
                path: out.join(MANIFEST_FILE),
                expected: expected_hash.to_string(),
                found: record.config_hash.clone(),
            });
        }
        for (rel, hash) in &record.artifacts {
            let path = out.join(rel);
            if !path.is_file() {
                return Err(PipelineError::MissingPrerequisite(path));
            }
            let found = file_sha256(&path)?;
            if &found != hash {
                return Err(PipelineError::HashMismatch {
                    path,
                    expected: hash.clone(),
                    found,
                });
            }
        }
        Ok(record)
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(out)?;
        let path = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
