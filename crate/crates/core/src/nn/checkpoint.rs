//! Checkpoint directory: `manifest.toml` plus `tensors.bin`, a little-endian
//! f64 blob holding the input normalization followed by every tensor in
//! manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, Hyper, InputNorm, ModelParams, TargetNorm, Tensor};
use crate::error::{Error, Result};
use crate::rng::fnv64;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "pivot-checkpoint";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const BLOB_FILE: &str = "tensors.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    architecture: Architecture,
    hyper: Hyper,
    target_norm: TargetNorm,
    blob_bytes: u64,
    blob_fnv64: String,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(params: &ModelParams, dir: &Path) -> Result<()> {
    params.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = params.hyper.input_size;
    let mut entries = vec![
        Entry {
            name: "input_norm.mean".into(),
            shape: vec![width],
        },
        Entry {
            name: "input_norm.scale".into(),
            shape: vec![width],
        },
    ];
    let mut blob = Vec::with_capacity(8 * (2 * width + params.num_parameters()));
    for v in params.input_norm.mean.iter().chain(&params.input_norm.scale) {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    for t in &params.tensors {
        entries.push(Entry {
            name: t.name.clone(),
            shape: t.shape.clone(),
        });
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        architecture: params.arch,
        hyper: params.hyper.clone(),
        target_norm: params.target_norm,
        blob_bytes: blob.len() as u64,
        blob_fnv64: format!("{:016x}", fnv64(&blob)),
        tensors: entries,
    };
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let text = toml::to_string(&manifest).map_err(|e| Error::invalid(format!("manifest encoding: {e}")))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelParams> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let version: Option<i64> = toml::from_str::<toml::Table>(&text)
        .map_err(|e| Error::Parse {
            path: manifest_path.clone(),
            line: 0,
            msg: e.to_string(),
        })?
        .get("version")
        .and_then(|v| v.as_integer());
    match version {
        Some(v) if v == CHECKPOINT_VERSION as i64 => {}
        other => {
            return Err(Error::Version {
                found: other.map_or("missing".into(), |v| v.to_string()),
                supported: CHECKPOINT_VERSION,
            })
        }
    }
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    if manifest.format != FORMAT {
        return Err(Error::invalid(format!(
            "{} is not a checkpoint manifest",
            manifest_path.display()
        )));
    }
    let blob_path = dir.join(BLOB_FILE);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if blob.len() as u64 != manifest.blob_bytes || format!("{:016x}", fnv64(&blob)) != manifest.blob_fnv64 {
        return Err(Error::Integrity(format!(
            "{} does not match its manifest",
            blob_path.display()
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = values.by_ref().take(n).collect();
        if v.len() != n {
            return Err(Error::Integrity("checkpoint blob is shorter than its manifest".into()));
        }
        Ok(v)
    };
    let mut entries = manifest.tensors.into_iter();
    let mut norm = Vec::new();
    for expected in ["input_norm.mean", "input_norm.scale"] {
        let e = entries
            .next()
            .filter(|e| e.name == expected)
            .ok_or_else(|| Error::Integrity(format!("manifest is missing {expected}")))?;
        norm.push(take(e.shape.iter().product())?);
    }
    let mut tensors = Vec::new();
    for e in entries {
        let data = take(e.shape.iter().product())?;
        tensors.push(Tensor {
            name: e.name,
            shape: e.shape,
            data,
        });
    }
    let scale = norm.pop().expect("two entries");
    let mean = norm.pop().expect("two entries");
    let params = ModelParams {
        arch: manifest.architecture,
        hyper: manifest.hyper,
        target_norm: manifest.target_norm,
        input_norm: InputNorm { mean, scale },
        tensors,
    };
    params.validate()?;
    Ok(params)
}
