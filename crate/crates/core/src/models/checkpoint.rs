use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_stager, ModelConfig, SleepStager};
use crate::error::{Error, Result};
use crate::nn::Scalar;

const MAGIC: &[u8; 8] = b"EARKDCK1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dtype: String,
    config: ModelConfig,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

/// A loaded model together with the free-form metadata stored beside it.
#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub model: SleepStager<F>,
    pub meta: BTreeMap<String, String>,
}

/// Layout: 8-byte magic, u64 LE header length, JSON header (dtype, model
/// config, metadata, tensor names and shapes), then every tensor's values as
/// little-endian scalars in header order.
pub fn write_checkpoint<F: Scalar>(
    model: &SleepStager<F>,
    meta: &BTreeMap<String, String>,
) -> Result<Vec<u8>> {
    let header = Header {
        dtype: F::DTYPE.to_string(),
        config: model.config().clone(),
        meta: meta.clone(),
        tensors: model
            .params()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + model.params().num_scalars() * F::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params().iter() {
        for v in &p.value {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

pub fn read_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<Checkpoint<F>> {
    let mismatch = |m: String| Error::CheckpointMismatch(m);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(mismatch("not a checkpoint file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| mismatch("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..body])?;
    if header.dtype != F::DTYPE {
        return Err(mismatch(format!(
            "checkpoint holds {} values, expected {}",
            header.dtype,
            F::DTYPE
        )));
    }
    let mut model = build_stager::<F>(&header.config)
        .map_err(|e| mismatch(format!("invalid model config: {e}")))?;
    let layout_ok = header.tensors.len() == model.params().len()
        && header
            .tensors
            .iter()
            .zip(model.params().iter())
            .all(|(t, p)| t.name == p.name && t.shape == p.shape);
    if !layout_ok {
        return Err(mismatch("tensor layout does not match the model config".into()));
    }
    let expected = model.params().num_scalars() * F::BYTES;
    let data = &bytes[body..];
    if data.len() != expected {
        return Err(mismatch(format!(
            "expected {expected} bytes of parameters, found {}",
            data.len()
        )));
    }
    let flat: Vec<F> = data.chunks_exact(F::BYTES).map(F::read_le).collect();
    model.params_mut().assign_flat(&flat);
    Ok(Checkpoint {
        model,
        meta: header.meta,
    })
}

pub fn save_checkpoint<F: Scalar>(
    model: &SleepStager<F>,
    meta: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    fs::write(path, write_checkpoint(model, meta)?)?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Checkpoint<F>> {
    read_checkpoint(&fs::read(path)?)
}
