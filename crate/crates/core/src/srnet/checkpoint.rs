//! Checkpoints: `<stem>.json` manifest plus `<stem>.bin`, the parameter
//! tensors as little-endian `f32` concatenated in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::conv::Conv2d;
use super::network::{NetworkParams, ResBlock};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::noise::NoiseConfig;

pub const FORMAT: &str = "dlsr-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub materials: usize,
    pub features: usize,
    pub blocks: usize,
    pub scale: u32,
    pub seed: u64,
    pub train: Option<TrainConfig>,
    pub noise: Option<NoiseConfig>,
    pub layers: Vec<LayerEntry>,
}

pub fn checkpoint_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut bin = stem.into_os_string();
    bin.push(".bin");
    (json.into(), bin.into())
}

pub fn save_checkpoint(
    params: &NetworkParams,
    scale: u32,
    train: Option<&TrainConfig>,
    noise: Option<&NoiseConfig>,
    path: impl AsRef<Path>,
) -> Result<CheckpointManifest> {
    let (json_path, bin_path) = checkpoint_paths(path);
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        materials: params.materials,
        features: params.features,
        blocks: params.blocks.len(),
        scale,
        seed: train.map(|t| t.seed).unwrap_or_default(),
        train: train.cloned(),
        noise: noise.copied(),
        layers: params
            .tensor_specs()
            .into_iter()
            .map(|s| LayerEntry { name: s.name, shape: s.shape })
            .collect(),
    };
    let mut blob = Vec::with_capacity(params.parameter_count() * 4);
    for t in params.tensors() {
        for &v in t {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    fs::write(&bin_path, blob).map_err(|e| Error::io(&bin_path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkParams, CheckpointManifest)> {
    let (json_path, bin_path) = checkpoint_paths(path);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(&json_path, 0, format!("line {} column {}: {e}", e.line(), e.column())))?;
    if manifest.format != FORMAT {
        return Err(Error::format(&json_path, 0, format!("unknown format {:?}", manifest.format)));
    }
    let m = manifest.materials;
    let f = manifest.features;
    let mut params = NetworkParams {
        materials: m,
        features: f,
        head: Conv2d::zeros(f, m + 1),
        blocks: (0..manifest.blocks)
            .map(|_| ResBlock {
                conv1: Conv2d::zeros(f, f),
                conv2: Conv2d::zeros(f, f),
            })
            .collect(),
        tail: Conv2d::zeros(m, f),
    };
    let expected: Vec<LayerEntry> = params
        .tensor_specs()
        .into_iter()
        .map(|s| LayerEntry { name: s.name, shape: s.shape })
        .collect();
    if expected != manifest.layers {
        return Err(Error::format(&json_path, 0, "layer list does not match the declared architecture"));
    }
    let blob = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let want = params.parameter_count() * 4;
    if blob.len() != want {
        return Err(Error::format(
            &bin_path,
            blob.len().min(want) as u64,
            format!("parameter blob has {} bytes, manifest requires {want}", blob.len()),
        ));
    }
    let mut offset = 0usize;
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            let b = &blob[offset..offset + 4];
            let x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if !x.is_finite() {
                return Err(Error::format(&bin_path, offset as u64, "non-finite parameter"));
            }
            *v = x as f64;
            offset += 4;
        }
    }
    Ok((params, manifest))
}
