//! Particle trajectory dumps: a raw little-endian `f32` blob laid out
//! `[frame][particle][xyz]` next to a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BLOB: &str = "positions.f32";
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpManifest {
    pub frames: usize,
    pub particles: usize,
    pub dtype: String,
    pub layout: String,
    pub blob: String,
}

pub fn write_trajectory_dump(dir: &Path, frames: &[Vec<[f64; 3]>]) -> Result<DumpManifest> {
    let particles = frames.first().map_or(0, Vec::len);
    if frames.iter().any(|f| f.len() != particles) {
        return Err(Error::dim("every frame needs the same particle count"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::with_capacity(frames.len() * particles * 12);
    for p in frames.iter().flatten().flatten() {
        bytes.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    let blob = dir.join(BLOB);
    fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
    let manifest =
        DumpManifest { frames: frames.len(), particles, dtype: "f32le".into(), layout: "frame,particle,xyz".into(), blob: BLOB.into() };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_trajectory_dump(dir: &Path) -> Result<(DumpManifest, Vec<Vec<[f32; 3]>>)> {
    let path = dir.join(MANIFEST);
    let manifest: DumpManifest = serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
    let blob = dir.join(&manifest.blob);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    if bytes.len() != manifest.frames * manifest.particles * 12 {
        return Err(Error::dim(format!(
            "{} holds {} bytes, manifest implies {}",
            blob.display(),
            bytes.len(),
            manifest.frames * manifest.particles * 12
        )));
    }
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let frames = values
        .chunks_exact(manifest.particles.max(1) * 3)
        .take(manifest.frames)
        .map(|f| f.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect())
        .collect();
    Ok((manifest, frames))
}
