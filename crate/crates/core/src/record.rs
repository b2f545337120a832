//! Persisted run records: versioned JSON, one content-addressed file per run.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::BoundPair;
use crate::constants::ConstantEstimate;
use crate::error::Result;
use crate::sojourn::{ConvergenceReport, TailCurve};
use crate::stats::{SeedSpec, EXPONENTIAL_ALGORITHM, NORMAL_ALGORITHM};
use crate::validate::CriterionResult;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngInfo {
    pub generator: String,
    pub normal: String,
    pub exponential: String,
    pub batch_size: u64,
}

impl RngInfo {
    pub fn current(batch_size: u64) -> Self {
        Self {
            generator: "ChaCha8, stream id = batch index".into(),
            normal: NORMAL_ALGORITHM.into(),
            exponential: EXPONENTIAL_ALGORITHM.into(),
            batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TRow {
    pub x: f64,
    pub eta: f64,
    pub closed: f64,
    pub finite: f64,
}

/// Numeric outputs of a run. Everything here is reproducible from the
/// command, parameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Constants {
        estimates: Vec<ConstantEstimate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<BoundPair>,
    },
    TFunction {
        beta: f64,
        b: f64,
        interior: bool,
        span: f64,
        rows: Vec<TRow>,
    },
    Bounds {
        rows: Vec<BoundPair>,
        dominance: bool,
    },
    Sojourn {
        curves: Vec<TailCurve>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report: Option<ConvergenceReport>,
    },
    Validation {
        quick: bool,
        criteria: Vec<CriterionResult>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub parameters: serde_json::Value,
    pub seed: SeedSpec,
    pub rng: RngInfo,
    pub started: String,
    pub finished: String,
    pub threads: usize,
    pub payload: Payload,
}

impl RunRecord {
    /// Canonical bytes of the reproducible part (no timestamps or threads).
    pub fn payload_bytes(&self) -> Result<Vec<u8>> {
        let body = serde_json::json!({
            "schema_version": self.schema_version,
            "command": self.command,
            "parameters": self.parameters,
            "seed": self.seed,
            "rng": self.rng,
            "payload": self.payload,
        });
        Ok(serde_json::to_vec(&body).map_err(std::io::Error::other)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self).map_err(std::io::Error::other)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text).map_err(std::io::Error::other)?)
    }

    /// File name derived from the SHA-256 of the full record.
    pub fn file_name(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(format!("{}-{}.json", self.command, &hex::encode(digest)[..16]))
    }

    /// Writes the record into `dir`, never replacing an existing file.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name()?);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                f.write_all(self.to_json()?.as_bytes())?;
                f.write_all(b"\n")?;
            }
            // identical content already recorded
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {}
            Err(e) => return Err(e.into()),
        }
        Ok(path)
    }
}
