//! Checkpoint files: a JSON manifest plus a flat little-endian value file.
//!
//! The manifest lists every parameter (name, shape, byte offset) in store
//! order. Values are written back to back in that order. With the default
//! `f64` dtype a save/load round trip is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

const FORMAT: &str = "framegraph-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointDtype {
    F32,
    #[default]
    F64,
}

impl CheckpointDtype {
    fn width(self) -> usize {
        match self {
            CheckpointDtype::F32 => 4,
            CheckpointDtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dtype: CheckpointDtype,
    data_file: String,
    checksum: String,
    config: ModelConfig,
    parameters: Vec<ParamEntry>,
}

fn data_path(manifest_path: &Path, file: &str) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(file)
}

/// Writes `<stem>.json` (the given path) and `<stem>.bin` next to it.
pub fn save_checkpoint(params: &ModelParams, manifest_path: &Path, dtype: CheckpointDtype) -> Result<()> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Contract(format!("bad checkpoint path {}", manifest_path.display())))?;
    let data_file = format!("{stem}.bin");
    let mut bytes = Vec::with_capacity(params.num_values() * dtype.width());
    let mut entries = Vec::with_capacity(params.store.len());
    for p in params.store.iter() {
        let (r, c) = p.value.shape();
        entries.push(ParamEntry {
            name: p.name().to_string(),
            shape: [r, c],
            offset: bytes.len(),
        });
        for &v in p.value.as_slice() {
            match dtype {
                CheckpointDtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
                CheckpointDtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype,
        data_file: data_file.clone(),
        checksum: format!("{:016x}", xxh3_64(&bytes)),
        config: params.config().clone(),
        parameters: entries,
    };
    let bin_path = data_path(manifest_path, &data_file);
    fs::write(&bin_path, &bytes).map_err(|e| Error::io(&bin_path, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Format(format!(
            "checkpoint {} has format {} v{}",
            manifest_path.display(),
            manifest.format,
            manifest.version
        )));
    }
    let bin_path = data_path(manifest_path, &manifest.data_file);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if format!("{:016x}", xxh3_64(&bytes)) != manifest.checksum {
        return Err(Error::Checksum {
            video: "<checkpoint>".into(),
            array: manifest.data_file.clone(),
        });
    }

    let mut params = ModelParams::zeros(&manifest.config)?;
    if manifest.parameters.len() != params.store.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} parameters, model has {}",
            manifest.parameters.len(),
            params.store.len()
        )));
    }
    let width = manifest.dtype.width();
    for entry in &manifest.parameters {
        let id = params
            .store
            .find(&entry.name)
            .ok_or_else(|| Error::Format(format!("unknown parameter `{}`", entry.name)))?;
        let target = &mut params.store.get_mut(id).value;
        if target.shape() != (entry.shape[0], entry.shape[1]) {
            return Err(Error::Format(format!(
                "parameter `{}` has shape {:?}, expected {:?}",
                entry.name,
                entry.shape,
                target.shape()
            )));
        }
        let end = entry.offset + target.len() * width;
        let raw = bytes.get(entry.offset..end).ok_or_else(|| {
            Error::Format(format!("parameter `{}` runs past end of data file", entry.name))
        })?;
        for (dst, chunk) in target.as_mut_slice().iter_mut().zip(raw.chunks_exact(width)) {
            *dst = match manifest.dtype {
                CheckpointDtype::F64 => f64::from_le_bytes(chunk.try_into().expect("8 bytes")),
                CheckpointDtype::F32 => f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64,
            };
        }
    }
    Ok(params)
}
