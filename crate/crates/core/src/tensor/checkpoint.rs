//! Checkpoint files: an 8-byte little-endian header length, a JSON header
//! listing `(name, shape, offset)` per parameter, then a little-endian
//! float32 blob. Offsets count bytes from the start of the blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    params: Vec<CheckpointEntry>,
}

const FORMAT: &str = "softworld-f32-v1";

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let mut params = Vec::with_capacity(store.len());
    let mut blob = Vec::with_capacity(store.num_weights() * 4);
    for p in store.iter() {
        params.push(CheckpointEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), offset: blob.len() });
        for &v in p.value.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Header { format: FORMAT.into(), params })?;
    let mut bytes = Vec::with_capacity(8 + header.len() + blob.len());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&blob);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads every `(name, tensor)` pair in file order.
pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::Checkpoint(format!("{} is truncated", path.display())));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let blob_start = 8usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("header length exceeds file size".into()))?;
    let header: Header = serde_json::from_slice(&bytes[8..blob_start])?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported checkpoint format `{}`", header.format)));
    }
    let blob = &bytes[blob_start..];
    header
        .params
        .into_iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            let end = e.offset + 4 * n;
            if end > blob.len() {
                return Err(Error::Checkpoint(format!("parameter `{}` exceeds the blob", e.name)));
            }
            let data = blob[e.offset..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
            Ok((e.name, Tensor::new(&e.shape, data)?))
        })
        .collect()
}

/// Loads a checkpoint into `store`, matching parameters by name. Every
/// parameter of the store must be present with the same shape.
pub fn load_checkpoint(store: &mut ParamStore, path: &Path) -> Result<()> {
    let entries = read_checkpoint(path)?;
    if entries.len() != store.len() {
        return Err(Error::Checkpoint(format!("checkpoint has {} parameters, model expects {}", entries.len(), store.len())));
    }
    for (name, t) in entries {
        store.set_value(&name, t)?;
    }
    Ok(())
}
