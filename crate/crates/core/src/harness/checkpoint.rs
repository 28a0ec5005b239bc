//! Trained-model checkpoints.
//!
//! On disk: one header line `PVRNN-CHECKPOINT <version>` followed by a JSON
//! document. Floats are written in shortest round-trip decimal form, so a
//! save/load cycle restores every value bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::io::{read_tagged, write_tagged};
use crate::network::{AdaptiveField, Model, ModelParams, NetworkSpec};
use crate::training::TrainConfig;

pub const CHECKPOINT_MAGIC: &str = "PVRNN-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub params: ModelParams,
    pub adaptive: AdaptiveField,
    pub train_config: TrainConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(model: Model, adaptive: AdaptiveField, train_config: TrainConfig) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            spec: model.spec,
            params: model.params,
            adaptive,
            seed: train_config.seed,
            train_config,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(self.spec.clone(), self.params.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_tagged(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_tagged(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    }
}
