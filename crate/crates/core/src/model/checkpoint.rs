use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, TransducerModel};
use crate::error::{Error, Result};
use crate::grad::Tensor;

const FORMAT: &str = "rnnt-personalize.archive";
const VERSION: u32 = 1;

/// Self-describing JSON container mapping tensor ids to shape + values.
/// Used for model checkpoints, Fisher/anchor snapshots and feature data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorArchive {
    pub format: String,
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

impl TensorArchive {
    pub fn new(kind: impl Into<String>, metadata: serde_json::Value) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            metadata,
            tensors: BTreeMap::new(),
        }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.format != FORMAT || self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected a {kind:?} archive, found {:?}/{:?}",
                self.format, self.kind
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let archive: Self = serde_json::from_slice(bytes)?;
        for (id, t) in &archive.tensors {
            if t.shape().iter().product::<usize>() != t.len() {
                return Err(Error::ShapeMismatch { op: "archive", detail: format!("tensor {id}") });
            }
        }
        Ok(archive)
    }
}

pub fn save_archive(archive: &TensorArchive, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, archive.to_bytes()?)?;
    Ok(())
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<TensorArchive> {
    TensorArchive::from_bytes(&fs::read(path)?)
}

impl TransducerModel {
    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut archive = TensorArchive::new("model", serde_json::to_value(&self.config)?);
        for p in self.params.iter() {
            archive.tensors.insert(p.id.clone(), p.value.clone());
        }
        Ok(archive)
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        archive.expect_kind("model")?;
        let config: ModelConfig = serde_json::from_value(archive.metadata.clone())?;
        let mut model = TransducerModel::new(config, 0)?;
        if archive.tensors.len() != model.params.len() {
            return Err(Error::ParameterMismatch(format!(
                "checkpoint has {} tensors, model has {}",
                archive.tensors.len(),
                model.params.len()
            )));
        }
        for p in model.params.iter_mut() {
            let t = archive
                .tensors
                .get(&p.id)
                .ok_or_else(|| Error::ParameterMismatch(format!("checkpoint lacks {}", p.id)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::ParameterMismatch(format!("shape of {}", p.id)));
            }
            p.value = t.clone();
            p.zero_grad();
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_archive(&self.to_archive()?, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&load_archive(path)?)
    }
}
