use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_model, ArchitectureConfig, Model, ModelContext, Network};
use crate::nn::{OptimizerSpec, Tensor};
use crate::{Error, Result, Scalar, TOOL_VERSION};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"HSCLSWT\0";
const HEADER_LEN: usize = 16;
const TRAILER_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_loss: f64,
    pub optimizer: OptimizerSpec,
    pub batch_size: usize,
    pub initialization: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Frozen, serializable model parameters plus everything needed to rebuild
/// and validate the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ArchitectureConfig,
    pub max_len: usize,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub class_list: Vec<String>,
    pub tensors: Vec<NamedTensor>,
    pub training: TrainingMetadata,
    pub model_version: String,
    pub tool_version: String,
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    #[serde(flatten)]
    config: ArchitectureConfig,
    max_len: usize,
    vocab_size: usize,
    vocab_hash: String,
    class_list: Vec<String>,
    training: TrainingMetadata,
    model_version: String,
    tool_version: String,
    config_hash: Option<String>,
    tensors: Vec<TensorEntry>,
}

impl ModelWeights {
    pub fn from_model<T: Scalar>(model: &Model<T>, ctx: &ModelContext, training: TrainingMetadata) -> Self {
        ModelWeights {
            config: model.config(),
            max_len: model.max_len(),
            vocab_size: model.vocab_size(),
            vocab_hash: ctx.vocab_hash.clone(),
            class_list: ctx.class_list.clone(),
            tensors: model
                .parameters()
                .into_iter()
                .map(|p| NamedTensor { name: p.name.clone(), shape: p.shape().to_vec(), values: p.value.to_f64_vec() })
                .collect(),
            training,
            model_version: "1.0.0".into(),
            tool_version: TOOL_VERSION.into(),
            config_hash: None,
        }
    }

    /// Rebuilds the network and loads every parameter by name and shape.
    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        let n_classes = self.class_list.len();
        let mut model = build_model::<T>(&self.config, self.vocab_size, n_classes, self.max_len, 0)?;
        let params = model.parameters_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Malformed(format!(
                "configuration implies {} tensors, file has {}",
                params.len(),
                self.tensors.len()
            )));
        }
        for (p, t) in params.into_iter().zip(&self.tensors) {
            if p.name != t.name || p.shape() != t.shape.as_slice() {
                return Err(Error::Malformed(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    t.name,
                    t.shape,
                    p.name,
                    p.shape()
                )));
            }
            p.value = Tensor::from_f64(&t.shape, &t.values)?;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let length = (t.values.len() * 8) as u64;
                let e = TensorEntry { name: t.name.clone(), shape: t.shape.clone(), offset, length };
                offset += length;
                e
            })
            .collect();
        let manifest = Manifest {
            format_version: WEIGHTS_FORMAT_VERSION,
            config: self.config.clone(),
            max_len: self.max_len,
            vocab_size: self.vocab_size,
            vocab_hash: self.vocab_hash.clone(),
            class_list: self.class_list.clone(),
            training: self.training.clone(),
            model_version: self.model_version.clone(),
            tool_version: self.tool_version.clone(),
            config_hash: self.config_hash.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(HEADER_LEN + json.len() + offset as usize + TRAILER_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32c::crc32c(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + TRAILER_LEN {
            return Err(Error::Truncated(format!("{} bytes is shorter than the fixed header", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Malformed("missing weights-file magic".into()));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if HEADER_LEN.saturating_add(mlen).saturating_add(TRAILER_LEN) > bytes.len() {
            return Err(Error::Truncated(format!("manifest of {mlen} bytes extends past end of file")));
        }
        let checksum = || -> Result<()> {
            let body = &bytes[..bytes.len() - TRAILER_LEN];
            let stored = u32::from_le_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().unwrap());
            let computed = crc32c::crc32c(body);
            if stored == computed {
                Ok(())
            } else {
                Err(Error::Checksum { stored, computed })
            }
        };
        let manifest_bytes = &bytes[HEADER_LEN..HEADER_LEN + mlen];
        let loose: serde_json::Value = match serde_json::from_slice(manifest_bytes) {
            Ok(v) => v,
            Err(e) => {
                checksum()?;
                return Err(Error::Malformed(format!("manifest is not JSON: {e}")));
            }
        };
        let blob_len = loose["tensors"]
            .as_array()
            .map(|ts| {
                ts.iter()
                    .map(|t| t["offset"].as_u64().unwrap_or(0) + t["length"].as_u64().unwrap_or(0))
                    .max()
                    .unwrap_or(0)
            })
            .unwrap_or(0) as usize;
        let expected = HEADER_LEN + mlen + blob_len + TRAILER_LEN;
        if bytes.len() < expected {
            return Err(Error::Truncated(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        checksum()?;
        let version = loose["format_version"].as_u64().unwrap_or(0) as u32;
        if version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: WEIGHTS_FORMAT_VERSION });
        }
        if bytes.len() != expected {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - expected)));
        }
        let m: Manifest = serde_json::from_slice(manifest_bytes).map_err(|e| Error::Malformed(e.to_string()))?;
        let blobs = &bytes[HEADER_LEN + mlen..HEADER_LEN + mlen + blob_len];
        let mut tensors = Vec::with_capacity(m.tensors.len());
        for e in m.tensors {
            let (start, len) = (e.offset as usize, e.length as usize);
            if len % 8 != 0 || len / 8 != e.shape.iter().product::<usize>() || start + len > blobs.len() {
                return Err(Error::Malformed(format!("tensor {} has inconsistent extent", e.name)));
            }
            let values = blobs[start..start + len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name: e.name, shape: e.shape, values });
        }
        Ok(ModelWeights {
            config: m.config,
            max_len: m.max_len,
            vocab_size: m.vocab_size,
            vocab_hash: m.vocab_hash,
            class_list: m.class_list,
            tensors,
            training: m.training,
            model_version: m.model_version,
            tool_version: m.tool_version,
            config_hash: m.config_hash,
        })
    }

    /// SHA-256 of the serialized file, hex encoded.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

pub fn save_weights(weights: &ModelWeights, path: &Path) -> Result<()> {
    let bytes = weights.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelWeights::from_bytes(&bytes)
}
