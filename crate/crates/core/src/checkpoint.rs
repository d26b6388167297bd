//! Model checkpoints: a JSON weight dump with a shape header and enough
//! context to regenerate scenarios the way training saw them.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{QNet, TrainConfig};
use crate::criticality::RewardKind;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint schema {0}")]
    UnsupportedSchema(u32),
    #[error("weight shapes do not match the declared dims")]
    ShapeMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// Layer sizes, input first.
    pub dims: Vec<usize>,
    pub reward_kind: RewardKind,
    pub train_config: TrainConfig,
    pub model: QNet,
}

impl Checkpoint {
    pub fn new(model: QNet, reward_kind: RewardKind, train_config: TrainConfig) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            dims: model.dims.clone(),
            reward_kind,
            train_config,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let json = serde_json::to_string(self)?;
        let mut file = std::fs::File::create(path)?;
        file.write_all(json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(CheckpointError::UnsupportedSchema(ckpt.schema_version));
        }
        if ckpt.dims != ckpt.model.dims {
            return Err(CheckpointError::ShapeMismatch);
        }
        for (i, pair) in ckpt.model.dims.windows(2).enumerate() {
            if ckpt.model.weights[i].len() != pair[0] * pair[1]
                || ckpt.model.biases[i].len() != pair[1]
            {
                return Err(CheckpointError::ShapeMismatch);
            }
        }
        Ok(ckpt)
    }
}
