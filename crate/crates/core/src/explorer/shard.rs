//! Binary episode shards. Little-endian throughout:
//!
//! ```text
//! magic "SWTRAJ01" | tool u32 | shape u32 | seed u64 | nodes u32 | steps u32
//! per step: nodes × [x, y, z, radius] f32 | pose 7 × f32 | contact u8 |
//!           reward f32 | edges u32 | edges × (a u32, b u32)
//! ```

use std::fs;
use std::path::Path;

use super::{StepRecord, Trajectory, TrajectoryHeader};
use crate::error::{Error, Result};
use crate::sim::{Shape, ToolKind, ToolPose};
use crate::skeleton::SkeletonGraph;

const MAGIC: &[u8; 8] = b"SWTRAJ01";

pub fn encode(t: &Trajectory) -> Vec<u8> {
    let h = &t.header;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&h.tool.index().to_le_bytes());
    out.extend_from_slice(&h.shape.index().to_le_bytes());
    out.extend_from_slice(&h.seed.to_le_bytes());
    out.extend_from_slice(&(h.skeleton_nodes as u32).to_le_bytes());
    out.extend_from_slice(&(t.steps.len() as u32).to_le_bytes());
    for s in &t.steps {
        for f in s.skeleton.features() {
            f.iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes()));
        }
        s.pose.padded().iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes()));
        out.push(s.contact as u8);
        out.extend_from_slice(&(s.reward as f32).to_le_bytes());
        out.extend_from_slice(&(s.skeleton.edges.len() as u32).to_le_bytes());
        for &(a, b) in &s.skeleton.edges {
            out.extend_from_slice(&(a as u32).to_le_bytes());
            out.extend_from_slice(&(b as u32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("shard truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as f64)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Trajectory> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a trajectory shard".into()));
    }
    let tool_idx = r.u32()?;
    let tool = ToolKind::from_index(tool_idx).ok_or_else(|| Error::Checkpoint(format!("unknown tool index {tool_idx}")))?;
    let shape_idx = r.u32()?;
    let shape = Shape::from_index(shape_idx).ok_or_else(|| Error::Checkpoint(format!("unknown shape index {shape_idx}")))?;
    let seed = r.u64()?;
    let k = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut steps = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let features = (0..k).map(|_| Ok([r.f32()?, r.f32()?, r.f32()?, r.f32()?])).collect::<Result<Vec<_>>>()?;
        let padded = (0..7).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let pose = ToolPose::new(tool, &padded[..tool.action_dim()])?;
        let contact = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Checkpoint(format!("bad contact byte {b}"))),
        };
        let reward = r.f32()?;
        let m = r.u32()? as usize;
        let edges = (0..m).map(|_| Ok((r.u32()? as usize, r.u32()? as usize))).collect::<Result<Vec<_>>>()?;
        let skeleton = SkeletonGraph::from_features(&features, edges)?;
        steps.push(StepRecord { skeleton, pose, contact, reward });
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes in shard", bytes.len() - r.at)));
    }
    Ok(Trajectory { header: TrajectoryHeader { tool, shape, seed, skeleton_nodes: k }, steps })
}

pub fn write(path: &Path, t: &Trajectory) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Trajectory> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
