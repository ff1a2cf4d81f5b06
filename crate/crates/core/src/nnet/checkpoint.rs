//! Versioned JSON checkpoints: network spec, flat parameters, optimizer
//! state and an optional free-form metadata echo.
//!
//! Floats are written in shortest round-trip decimal form, so loading a
//! checkpoint reproduces the saved parameters bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::policy::PolicyParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "qgate-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// `ppo` or `metaqctrl`.
    pub algorithm: String,
    pub params: PolicyParams,
    pub optimizer: Adam,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(algorithm: &str, params: PolicyParams, optimizer: Adam, metadata: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            algorithm: algorithm.to_string(),
            params,
            optimizer,
            metadata,
        }
    }

    pub fn to_string_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint: format '{}'", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        if ck.params.values.len() != ck.params.spec.param_count() {
            return Err(Error::Config("checkpoint parameter count does not match its spec".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string_pretty()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }
}
