//! Single-file member checkpoints.
//!
//! ```text
//! "ENSRCKPT" | u32 LE version | u32 LE header length | JSON header | f32 LE values
//! ```
//!
//! The header carries the model config, the member seed, training progress
//! and the tensor table; loading rebuilds the layout from the config and
//! rejects any mismatch with the stored table.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::Surrogate;
use super::params::{build_plan, PredictorParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ENSRCKPT";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub loss_history: Vec<f64>,
    pub params: PredictorParams<f32>,
}

impl Checkpoint {
    pub fn surrogate(&self) -> Result<Surrogate<f32>> {
        Surrogate::new(self.config.clone(), self.params.clone())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    seed: u64,
    epoch: usize,
    loss_history: Vec<f64>,
    dtype: String,
    param_count: usize,
    tensors: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let layout = ckpt.params.layout();
    let header = Header {
        config: ckpt.config.clone(),
        seed: ckpt.seed,
        epoch: ckpt.epoch,
        loss_history: ckpt.loss_history.clone(),
        dtype: "float32-le".into(),
        param_count: layout.total(),
        tensors: layout
            .entries()
            .iter()
            .map(|e| TensorRecord {
                name: e.name.clone(),
                shape: e.shape.clone(),
                offset: e.offset,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * layout.total());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in ckpt.params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    // Write-then-rename so a crash never leaves a truncated checkpoint.
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, out)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let raw = fs::read(path)?;
    if raw.len() < 16 || &raw[..8] != MAGIC {
        return Err(Error::format(path, "not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(raw[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version.to_string(),
            expected: CHECKPOINT_VERSION.to_string(),
        });
    }
    let hlen = u32::from_le_bytes(raw[12..16].try_into().expect("4 bytes")) as usize;
    let body = 16 + hlen;
    if raw.len() < body {
        return Err(Error::format(path, "truncated header"));
    }
    let header: Header = serde_json::from_slice(&raw[16..body]).map_err(|e| Error::format(path, e.to_string()))?;
    if header.dtype != "float32-le" {
        return Err(Error::format(path, format!("unsupported dtype {}", header.dtype)));
    }
    header.config.validate()?;
    let (layout, _) = build_plan(&header.config);
    let stored_matches = header.param_count == layout.total()
        && header.tensors.len() == layout.entries().len()
        && header
            .tensors
            .iter()
            .zip(layout.entries())
            .all(|(t, e)| t.name == e.name && t.shape == e.shape && t.offset == e.offset);
    if !stored_matches {
        return Err(Error::format(path, "tensor table does not match the model config"));
    }
    let expected = body + 4 * layout.total();
    if raw.len() != expected {
        return Err(Error::ByteLength {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: raw.len() as u64,
        });
    }
    let values = raw[body..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let params = PredictorParams::from_parts(Arc::new(layout), values)?;
    Ok(Checkpoint {
        config: header.config,
        seed: header.seed,
        epoch: header.epoch,
        loss_history: header.loss_history,
        params,
    })
}
