use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LtcsError, Result};
use crate::model::{LtcsConfig, LtcsModel};
use crate::real::{Precision, Real};
use crate::tensor::Tensor2;
use crate::train::config::TrainConfig;
use crate::train::trainer::EpochMetrics;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "LTCS-CHECKPOINT v";

/// One parameter tensor, widened to `f64` in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Trained parameters of both rankers with the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub ltcs_config: LtcsConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub tensors: Vec<NamedTensor>,
    pub history: Vec<EpochMetrics>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    precision: Precision,
    seed: u64,
    ltcs_config: LtcsConfig,
    train_config: TrainConfig,
    history: Vec<EpochMetrics>,
    tensors: Vec<TensorEntry>,
    payload_bytes: usize,
}

impl Checkpoint {
    pub fn from_model<F: Real>(model: &LtcsModel<F>, train_config: &TrainConfig, history: Vec<EpochMetrics>) -> Self {
        let ps = model.params();
        let tensors = ps
            .iter_named()
            .map(|(name, id)| {
                let t = ps.value(id);
                NamedTensor {
                    name: name.to_string(),
                    rows: t.rows(),
                    cols: t.cols(),
                    data: t.data().iter().map(|x| x.as_f64()).collect(),
                }
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            ltcs_config: model.config().clone(),
            train_config: train_config.clone(),
            seed: train_config.seed,
            tensors,
            history,
        }
    }

    pub fn precision(&self) -> Precision {
        self.ltcs_config.precision
    }

    /// Rebuilds the model. Every architecture tensor must be present with its shape.
    pub fn to_model<F: Real>(&self) -> Result<LtcsModel<F>> {
        let mut model = LtcsModel::<F>::new(&self.ltcs_config)?;
        if model.params().len() != self.tensors.len() {
            return Err(LtcsError::Checkpoint(format!(
                "checkpoint holds {} tensors, architecture expects {}",
                self.tensors.len(),
                model.params().len()
            )));
        }
        for t in &self.tensors {
            let id = model
                .params()
                .id(&t.name)
                .ok_or_else(|| LtcsError::Checkpoint(format!("unexpected tensor {}", t.name)))?;
            let dst = model.params_mut().value_mut(id);
            if dst.shape() != (t.rows, t.cols) {
                return Err(LtcsError::Checkpoint(format!(
                    "tensor {} has shape {}x{}, expected {:?}",
                    t.name, t.rows, t.cols, dst.shape()
                )));
            }
            *dst = Tensor2::from_vec(t.rows, t.cols, t.data.iter().map(|&x| F::from_f64(x)).collect())?;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let precision = self.precision();
        let width = precision.bytes();
        let payload_bytes = self.tensors.iter().map(|t| t.data.len() * width).sum();
        let manifest = Manifest {
            version: self.version,
            precision,
            seed: self.seed,
            ltcs_config: self.ltcs_config.clone(),
            train_config: self.train_config.clone(),
            history: self.history.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorEntry { name: t.name.clone(), rows: t.rows, cols: t.cols })
                .collect(),
            payload_bytes,
        };
        let json = serde_json::to_string(&manifest).map_err(|e| LtcsError::Checkpoint(e.to_string()))?;
        let mut out = format!("{MAGIC}{}\n{json}\n", self.version).into_bytes();
        out.reserve(payload_bytes);
        for t in &self.tensors {
            for &x in &t.data {
                match precision {
                    Precision::F32 => (x as f32).write_le(&mut out),
                    Precision::F64 => x.write_le(&mut out),
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| LtcsError::Checkpoint(m.to_string());
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not utf-8"))?;
        let version: u32 = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| bad("not an LTCS checkpoint"))?
            .parse()
            .map_err(|_| bad("unreadable format version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(LtcsError::Checkpoint(format!(
                "checkpoint format version {version} is not supported (this build reads version {CHECKPOINT_VERSION})"
            )));
        }
        let rest = &bytes[nl + 1..];
        let nl2 = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(&rest[..nl2]).map_err(|e| LtcsError::Checkpoint(format!("bad manifest: {e}")))?;
        if manifest.version != version {
            return Err(LtcsError::Checkpoint(format!(
                "manifest version {} disagrees with header version {version}",
                manifest.version
            )));
        }
        if manifest.precision != manifest.ltcs_config.precision {
            return Err(bad("manifest precision disagrees with the model config"));
        }
        let payload = &rest[nl2 + 1..];
        if payload.len() != manifest.payload_bytes {
            return Err(LtcsError::Checkpoint(format!(
                "payload is {} bytes, manifest declares {} (truncated or corrupt file)",
                payload.len(),
                manifest.payload_bytes
            )));
        }
        let width = manifest.precision.bytes();
        let expected: usize = manifest.tensors.iter().map(|t| t.rows * t.cols * width).sum();
        if expected != payload.len() {
            return Err(bad("tensor index does not match payload size"));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in manifest.tensors {
            let count = entry.rows * entry.cols;
            let data = (0..count)
                .map(|i| {
                    let at = &payload[offset + i * width..];
                    match manifest.precision {
                        Precision::F32 => f32::read_le(at) as f64,
                        Precision::F64 => f64::read_le(at),
                    }
                })
                .collect();
            offset += count * width;
            tensors.push(NamedTensor { name: entry.name, rows: entry.rows, cols: entry.cols, data });
        }
        Ok(Checkpoint {
            version,
            ltcs_config: manifest.ltcs_config,
            train_config: manifest.train_config,
            seed: manifest.seed,
            tensors,
            history: manifest.history,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_bytes()?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
