//! Checkpoint container and a reader for safetensors weight files.
//!
//! Layout: the magic `MSIACKPT`, a little-endian `u32` version, a
//! little-endian `u64` header length, a JSON header, then every tensor as
//! contiguous little-endian `f32` values in header order.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use matting_nn::{ParamId, Sgd, Shape, Tensor};
use serde::{Deserialize, Serialize};

use super::{AblationVariant, ModelConfig, MsiaMatte};
use crate::error::{MattingError, Result};

const MAGIC: &[u8; 8] = b"MSIACKPT";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorRole {
    Param,
    Buffer,
    Momentum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    role: TensorRole,
    shape: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    epoch: usize,
    iteration: usize,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub role: TensorRole,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub epoch: usize,
    pub iteration: usize,
    pub seed: u64,
    pub tensors: Vec<NamedTensor>,
}

fn corrupt(detail: impl Into<String>) -> MattingError {
    MattingError::Checkpoint(detail.into())
}

impl Checkpoint {
    /// Snapshot of the model's parameters and buffers, plus the optimizer's
    /// momentum buffers when given.
    pub fn capture(
        model: &MsiaMatte,
        optimizer: Option<&Sgd>,
        epoch: usize,
        iteration: usize,
    ) -> Self {
        let store = model.store();
        let mut tensors: Vec<NamedTensor> = store
            .params()
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                role: TensorRole::Param,
                tensor: p.value.clone(),
            })
            .collect();
        tensors.extend(store.buffers().map(|(_, b)| NamedTensor {
            name: b.name.clone(),
            role: TensorRole::Buffer,
            tensor: b.value.clone(),
        }));
        if let Some(opt) = optimizer {
            for (id, p) in store.params() {
                if let Some(v) = opt.velocity(id) {
                    tensors.push(NamedTensor {
                        name: p.name.clone(),
                        role: TensorRole::Momentum,
                        tensor: v.clone(),
                    });
                }
            }
        }
        Self {
            config: model.config().clone(),
            epoch,
            iteration,
            seed: store.seed(),
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.config.clone(),
            epoch: self.epoch,
            iteration: self.iteration,
            seed: self.seed,
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    role: t.role,
                    shape: t.tensor.shape().dims(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.tensors.iter().map(|t| t.tensor.numel() * 4).sum();
        let mut out = Vec::with_capacity(20 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in t.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < len {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..len])
            .map_err(|e| corrupt(format!("malformed header: {e}")))?;
        let mut data = &body[len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let [n, c, h, w] = entry.shape;
            let shape = Shape::new(n, c, h, w);
            let bytes_needed = shape.numel() * 4;
            if data.len() < bytes_needed {
                return Err(corrupt(format!("truncated data for `{}`", entry.name)));
            }
            let values = data[..bytes_needed]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            data = &data[bytes_needed..];
            tensors.push(NamedTensor {
                name: entry.name,
                role: entry.role,
                tensor: Tensor::from_vec(shape, values)?,
            });
        }
        if !data.is_empty() {
            return Err(corrupt(format!("{} trailing bytes", data.len())));
        }
        Ok(Self {
            config: header.model,
            epoch: header.epoch,
            iteration: header.iteration,
            seed: header.seed,
            tensors,
        })
    }

    /// Writes through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(MattingError::io(&tmp))?;
            f.write_all(&self.to_bytes())
                .map_err(MattingError::io(&tmp))?;
            f.sync_all().map_err(MattingError::io(&tmp))?;
        }
        fs::rename(&tmp, path).map_err(MattingError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(MattingError::io(path))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            MattingError::Checkpoint(d) => {
                MattingError::Checkpoint(format!("{}: {d}", path.display()))
            }
            other => other,
        })
    }

    pub fn check_variant(&self, requested: AblationVariant) -> Result<()> {
        if self.config.ablation_variant != requested {
            return Err(MattingError::VariantMismatch {
                checkpoint: self.config.ablation_variant.to_string(),
                requested: requested.to_string(),
            });
        }
        Ok(())
    }

    /// Rebuilds the model and overwrites every parameter and buffer.
    pub fn build_model(&self) -> Result<MsiaMatte> {
        let mut model = MsiaMatte::new(self.config.clone(), self.seed)?;
        let expected = model.store().len() + model.store().buffers().count();
        let stored = self
            .tensors
            .iter()
            .filter(|t| t.role != TensorRole::Momentum)
            .count();
        if stored != expected {
            return Err(corrupt(format!(
                "holds {stored} parameter and buffer tensors, model has {expected}"
            )));
        }
        for t in self
            .tensors
            .iter()
            .filter(|t| t.role != TensorRole::Momentum)
        {
            model
                .store_mut()
                .assign(&t.name, t.tensor.clone())
                .map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(model)
    }

    /// Loads momentum buffers into `optimizer`, matching parameters by name.
    pub fn restore_optimizer(&self, model: &MsiaMatte, optimizer: &mut Sgd) -> Result<()> {
        for t in self
            .tensors
            .iter()
            .filter(|t| t.role == TensorRole::Momentum)
        {
            let id: ParamId = model
                .store()
                .param_id(&t.name)
                .ok_or_else(|| corrupt(format!("momentum for unknown parameter `{}`", t.name)))?;
            if model.store().value(id).shape() != t.tensor.shape() {
                return Err(corrupt(format!("momentum shape mismatch for `{}`", t.name)));
            }
            optimizer.set_velocity(id, t.tensor.clone());
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct SafetensorsEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

/// Dimensions and values of one stored tensor.
pub type RawTensor = (Vec<usize>, Vec<f32>);

/// Reads every `F32` tensor of a safetensors file.
pub fn read_safetensors(path: &Path) -> Result<HashMap<String, RawTensor>> {
    let bytes = fs::read(path).map_err(MattingError::io(path))?;
    let bad = |detail: String| MattingError::Format {
        what: "safetensors file",
        path: path.to_owned(),
        detail,
    };
    if bytes.len() < 8 {
        return Err(bad("file too short".into()));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let header = bytes
        .get(8..8 + n)
        .ok_or_else(|| bad("truncated header".into()))?;
    let raw: HashMap<String, serde_json::Value> =
        serde_json::from_slice(header).map_err(|e| bad(e.to_string()))?;
    let data = &bytes[8 + n..];
    let mut out = HashMap::new();
    for (name, value) in raw {
        if name == "__metadata__" {
            continue;
        }
        let entry: SafetensorsEntry =
            serde_json::from_value(value).map_err(|e| bad(format!("{name}: {e}")))?;
        if entry.dtype != "F32" {
            return Err(bad(format!("{name}: unsupported dtype {}", entry.dtype)));
        }
        let [start, end] = entry.data_offsets;
        let slice = data
            .get(start..end)
            .filter(|s| s.len() == 4 * entry.shape.iter().product::<usize>())
            .ok_or_else(|| bad(format!("{name}: data offsets out of range")))?;
        let values = slice
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        out.insert(name, (entry.shape, values));
    }
    Ok(out)
}

/// Writes `F32` tensors in safetensors layout, keys in the given order.
pub fn write_safetensors(path: &Path, tensors: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
    let mut header = serde_json::Map::new();
    let mut offset = 0;
    for (name, shape, values) in tensors {
        let end = offset + values.len() * 4;
        header.insert(
            name.clone(),
            serde_json::json!({"dtype": "F32", "shape": shape, "data_offsets": [offset, end]}),
        );
        offset = end;
    }
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, values) in tensors {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(MattingError::io(path))
}
