//! Versioned checkpoint format for trained hyper-posteriors.

use serde::{Deserialize, Serialize};

use super::HyperPosterior;
use crate::bnn::BnnConfig;
use crate::error::{Error, Result};
use crate::gp::GpConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Base-learner family and its fixed configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Gp(GpConfig),
    Bnn(BnnConfig),
}

/// Serialized result of meta-training. JSON round-trips are exact: every
/// float is written with enough digits to restore the identical bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub spec: ModelSpec,
    pub hyper_posterior: HyperPosterior,
}

impl Checkpoint {
    pub fn new(config_hash: String, spec: ModelSpec, hyper_posterior: HyperPosterior) -> Self {
        Self { version: CHECKPOINT_VERSION, config_hash, spec, hyper_posterior }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
