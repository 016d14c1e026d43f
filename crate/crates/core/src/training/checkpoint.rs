use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{EpochRecord, TrainingConfig};
use crate::dataset::ClassWeightTable;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::models::{ModelSpec, Network};

pub const CHECKPOINT_FORMAT: &str = "painpipe-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Best-validation model state of one training run.
///
/// Serialised as JSON; each parameter slot is stored as base64 of its
/// little-endian `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    /// Seed the network was initialised with.
    pub init_seed: u64,
    pub fold_id: usize,
    pub config: TrainingConfig,
    pub class_weights: ClassWeightTable,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub history: Vec<EpochRecord>,
    #[serde(with = "blobs")]
    pub parameters: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn network(&self) -> Result<Network> {
        Network::with_parameters(&self.spec, self.init_seed, self.parameters.clone())
    }

    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.history.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => {
                return Err(Error::Format(format!(
                    "not a checkpoint (format field {other:?})"
                )))
            }
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            other => {
                return Err(Error::Format(format!(
                    "unsupported checkpoint version {other:?} (expected {CHECKPOINT_VERSION})"
                )))
            }
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}

mod blobs {
    use super::*;
    use serde::de::Error as _;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(params: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let encoded: Vec<String> = params
            .iter()
            .map(|p| {
                let bytes: Vec<u8> = p.iter().flat_map(|v| v.to_le_bytes()).collect();
                STANDARD.encode(bytes)
            })
            .collect();
        encoded.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let encoded = Vec::<String>::deserialize(d)?;
        encoded
            .iter()
            .map(|blob| {
                let bytes = STANDARD.decode(blob).map_err(D::Error::custom)?;
                if bytes.len() % 8 != 0 {
                    return Err(D::Error::custom("parameter blob length is not a multiple of 8"));
                }
                Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect())
            })
            .collect()
    }
}
