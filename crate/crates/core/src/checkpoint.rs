//! Versioned JSON checkpoints of a trained proposal.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposal::ConditionalProposal;
use crate::scm::Scm;
use crate::train::{TrainConfig, TrainState, TrainTrace};

pub const CHECKPOINT_FORMAT: &str = "exom-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub scm_name: String,
    pub scm_hash: String,
    pub model: ConditionalProposal,
    pub train_config: Option<TrainConfig>,
    pub state: Option<TrainState>,
    pub trace: Option<TrainTrace>,
    /// Hash of the manifest of the run that produced this file.
    pub manifest: Option<String>,
}

impl Checkpoint {
    pub fn new(scm: &Scm, model: ConditionalProposal) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            scm_name: scm.name().into(),
            scm_hash: scm.hash().into(),
            model,
            train_config: None,
            state: None,
            trace: None,
            manifest: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a checkpoint, rejecting unknown formats and versions before
    /// looking at the payload.
    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => return Err(Error::Checkpoint(format!("unknown format {other:?}"))),
        }
        match v.get("version").and_then(|x| x.as_u64()) {
            Some(x) if x == u64::from(CHECKPOINT_VERSION) => {}
            other => {
                return Err(Error::Checkpoint(format!(
                    "version {other:?} is not the supported version {CHECKPOINT_VERSION}"
                )))
            }
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Reads a checkpoint and binds its model to `scm`.
    pub fn load(path: &Path, scm: &Scm) -> Result<Self> {
        let mut ck = Self::from_json(&fs::read_to_string(path)?)?;
        ck.attach(scm)?;
        Ok(ck)
    }

    /// Binds the model to `scm`; fails when the SCM differs from the one
    /// the model was trained on.
    pub fn attach(&mut self, scm: &Scm) -> Result<()> {
        if self.scm_hash != scm.hash() {
            return Err(Error::Checkpoint(format!(
                "trained on `{}` ({}), not `{}` ({})",
                self.scm_name,
                &self.scm_hash[..12.min(self.scm_hash.len())],
                scm.name(),
                &scm.hash()[..12.min(scm.hash().len())]
            )));
        }
        self.model.attach(scm)
    }
}
