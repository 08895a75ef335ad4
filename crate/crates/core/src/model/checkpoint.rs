//! Binary checkpoint container.
//!
//! Layout, version 1:
//!
//! | bytes      | content                                   |
//! |------------|-------------------------------------------|
//! | 8          | magic `MVGCCAK1`                          |
//! | 4          | header length `h`, little-endian `u32`    |
//! | h          | UTF-8 JSON header                         |
//! | rest       | tensor data, little-endian, header dtype  |
//!
//! The header holds `version`, `dtype` (`"f32"` or `"f64"`), the training
//! configuration, the view dimensions and one entry per tensor with its name
//! (`enc.{view}.krylov.{layer}.weight`, `dec.{view}.log_psi`, ...), shape and
//! element offset into the data section. Weight matrices are row-major
//! `in x out`.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::TrainConfig;
use crate::model::params::ModelParams;
use crate::real::Real;

pub const MAGIC: &[u8; 8] = b"MVGCCAK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    config: TrainConfig,
    view_dims: Vec<usize>,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint<F: Real>(path: &Path, params: &ModelParams<F>, config: &TrainConfig) -> Result<()> {
    let mut offset = 0;
    let mut entries = Vec::new();
    let mut data = Vec::with_capacity(params.parameter_count() * std::mem::size_of::<F>());
    for t in params.tensors() {
        entries.push(TensorEntry {
            name: t.name,
            shape: t.shape,
            offset,
        });
        offset += t.data.len();
        for &v in t.data {
            if F::DTYPE == "f32" {
                data.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            } else {
                data.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
    let header = Header {
        version: FORMAT_VERSION,
        dtype: F::DTYPE.to_string(),
        config: config.clone(),
        view_dims: params.view_dims(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&len.to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&data)?;
    f.flush()?;
    Ok(())
}

/// Reads a checkpoint, converting stored values to `F`.
pub fn load_checkpoint<F: Real>(path: &Path) -> Result<(ModelParams<F>, TrainConfig)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    let width = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(bad(&format!("unknown dtype {other}"))),
    };
    let data = &bytes[12 + len..];
    let read = |i: usize| -> Option<f64> {
        let chunk = data.get(i * width..(i + 1) * width)?;
        Some(if width == 4 {
            f32::from_le_bytes(chunk.try_into().ok()?) as f64
        } else {
            f64::from_le_bytes(chunk.try_into().ok()?)
        })
    };

    let scales = vec![1.0; header.view_dims.len()];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::<F>::init(&header.view_dims, &scales, &header.config, &mut rng);
    let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if expected.len() != header.tensors.len() {
        return Err(bad("tensor count does not match the stored configuration"));
    }
    for ((slot, (name, shape)), entry) in params.tensors_mut().into_iter().zip(expected).zip(&header.tensors) {
        if entry.name != name || entry.shape != shape {
            return Err(bad(&format!("expected tensor {name} {shape:?}, found {} {:?}", entry.name, entry.shape)));
        }
        for (k, v) in slot.iter_mut().enumerate() {
            *v = F::of(read(entry.offset + k).ok_or_else(|| bad("truncated data"))?);
        }
    }
    Ok((params, header.config))
}
