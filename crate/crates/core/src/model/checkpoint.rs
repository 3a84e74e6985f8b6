//! Checkpoint file: one UTF-8 JSON manifest line, then a little-endian f32
//! parameter blob addressed by the manifest's byte offsets.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, IIAEModel, ModelDims};
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_all, read_f32s, split_header_line};
use crate::scalar::Scalar;
use crate::trainer::TrainConfig;

const FORMAT: &str = "iiae-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset_bytes: usize,
    pub len_floats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dims: ModelDims,
    pub arch: ArchConfig,
    pub config: Option<TrainConfig>,
    pub step: usize,
    pub seed: u64,
    #[serde(default)]
    pub provenance: Option<serde_json::Value>,
    pub tensors: Vec<TensorEntry>,
}

/// Everything in a checkpoint besides the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub config: Option<TrainConfig>,
    pub step: usize,
    pub seed: u64,
    pub provenance: Option<serde_json::Value>,
}

pub fn encode_checkpoint<T: Scalar>(model: &IIAEModel<T>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, shape, values) in model.tensors() {
        tensors.push(TensorEntry {
            name,
            shape,
            offset_bytes: offset,
            len_floats: values.len(),
        });
        offset += 4 * values.len();
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dims: *model.dims(),
        arch: model.arch().clone(),
        config: meta.config.clone(),
        step: meta.step,
        seed: meta.seed,
        provenance: meta.provenance.clone(),
        tensors,
    };
    let mut out = serde_json::to_vec(&manifest)?;
    out.push(b'\n');
    out.reserve(offset);
    for v in model.param_slices().into_iter().flatten() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(IIAEModel<T>, CheckpointMeta)> {
    let (line, blob) = split_header_line(bytes)?;
    let manifest: Manifest =
        serde_json::from_str(line).map_err(|e| Error::Format(format!("corrupt checkpoint manifest: {e}")))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint {} v{}",
            manifest.format, manifest.version
        )));
    }
    let arch = &manifest.arch;
    let d = &manifest.dims;
    if (d.zx_dim, d.zs_dim, d.zy_dim) != (arch.zx_dim, arch.zs_dim, arch.zy_dim) {
        return Err(Error::Format("manifest dims disagree with architecture".into()));
    }
    let mut model = IIAEModel::<T>::zeros(d.x_dim, d.y_dim, arch)?;
    let expected: Vec<(String, Vec<usize>)> = model
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if expected.len() != manifest.tensors.len() {
        return Err(Error::Format(format!(
            "manifest lists {} tensors, architecture has {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }

    // validate the whole manifest before touching the payload
    let mut prev_end = 0usize;
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if &entry.name != name {
            return Err(Error::Format(format!("expected tensor `{name}`, found `{}`", entry.name)));
        }
        if &entry.shape != shape {
            return Err(Error::ShapeMismatch {
                tensor: name.clone(),
                expected: shape.clone(),
                found: entry.shape.clone(),
            });
        }
        if entry.len_floats != shape.iter().product::<usize>() {
            return Err(Error::Format(format!("tensor `{name}` length disagrees with its shape")));
        }
        if entry.offset_bytes % 4 != 0 || entry.offset_bytes < prev_end {
            return Err(Error::Format(format!("tensor `{name}` overlaps its predecessor")));
        }
        let end = entry.offset_bytes + 4 * entry.len_floats;
        if end > blob.len() {
            return Err(Error::Truncated {
                tensor: name.clone(),
                needed: end,
                available: blob.len(),
            });
        }
        prev_end = end;
    }

    for (slice, entry) in model.param_slices_mut().into_iter().zip(&manifest.tensors) {
        let raw = &blob[entry.offset_bytes..entry.offset_bytes + 4 * entry.len_floats];
        for (dst, v) in slice.iter_mut().zip(read_f32s(raw)) {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("parameter in `{}`", entry.name)));
            }
            *dst = T::of(v as f64);
        }
    }
    let meta = CheckpointMeta {
        config: manifest.config,
        step: manifest.step,
        seed: manifest.seed,
        provenance: manifest.provenance,
    };
    Ok((model, meta))
}

pub fn save_checkpoint<T: Scalar>(model: &IIAEModel<T>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model, meta)?;
    atomic_write(path, |w: &mut dyn Write| w.write_all(&bytes).map_err(|e| Error::io(path, e)))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(IIAEModel<T>, CheckpointMeta)> {
    decode_checkpoint(&read_all(path)?)
}
