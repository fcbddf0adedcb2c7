//! Versioned JSON checkpoints.
//!
//! Layout:
//!
//! ```text
//! {
//!   "format": "fairgo-checkpoint",
//!   "version": 1,
//!   "kind": "<model kind>",
//!   "seed": <u64>,
//!   "config_hash": "<hex sha256>",
//!   "payload": { ...model-specific, matrices carry rows/cols/values... }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a checkpoint
//! reproduces parameters bit-for-bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::NnError;

pub const CHECKPOINT_FORMAT: &str = "fairgo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub payload: T,
}

impl<T: Serialize + DeserializeOwned> Checkpoint<T> {
    pub fn new(kind: impl Into<String>, seed: u64, config_hash: impl Into<String>, payload: T) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.into(),
            seed,
            config_hash: config_hash.into(),
            payload,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let text = serde_json::to_string(self).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    /// Loads a checkpoint and verifies its header and kind.
    pub fn load(path: &Path, expected_kind: &str) -> Result<Self, NnError> {
        let text = fs::read_to_string(path)?;
        let ckpt: Self =
            serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "{}: unsupported header {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        if ckpt.kind != expected_kind {
            return Err(NnError::Checkpoint(format!(
                "{}: expected kind {expected_kind}, found {}",
                path.display(),
                ckpt.kind
            )));
        }
        Ok(ckpt)
    }
}
