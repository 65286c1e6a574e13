//! Heterogeneous scene graphs, the shifted (next-pose, current-shape)
//! dataset transform and batched graph containers for the encoder.

mod encoder;

pub use encoder::GraphEncoder;

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ToolKind, ToolPose};
use crate::skeleton::SkeletonGraph;
use crate::tensor::{Tape, Tensor, Var};

/// Width of every latent embedding.
pub const EMBED_DIM: usize = 32;
/// Object node feature width: position and radius.
pub const OBJECT_FEATURES: usize = 4;
/// Manipulator node feature width.
pub const MANIP_FEATURES: usize = 7;

/// A 32-wide embedding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentState(pub [f64; EMBED_DIM]);

impl LatentState {
    pub fn zeros() -> Self {
        Self([0.0; EMBED_DIM])
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; EMBED_DIM] = v.try_into().map_err(|_| Error::dim(format!("embedding needs {EMBED_DIM} values, got {}", v.len())))?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(Error::dim("embedding values must be finite"));
        }
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::row(&self.0)
    }

    /// Stacks embeddings into a `[n, 32]` tensor.
    pub fn stack(items: &[LatentState]) -> Tensor {
        Tensor::new(
            &[items.len().max(1), EMBED_DIM],
            if items.is_empty() { vec![0.0; EMBED_DIM] } else { items.iter().flat_map(|l| l.0).collect() },
        )
        .expect("finite embeddings")
    }

    /// Splits the rows of a `[n, 32]` tensor.
    pub fn unstack(t: &Tensor) -> Vec<LatentState> {
        (0..t.rows()).map(|r| LatentState(t.row_slice(r).try_into().expect("32 columns"))).collect()
    }

    pub fn squared_distance(&self, other: &LatentState) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    pub object_feats: Vec<[f64; OBJECT_FEATURES]>,
    pub manip_feats: Vec<[f64; MANIP_FEATURES]>,
    /// Undirected skeleton links.
    pub object_edges: Vec<(usize, usize)>,
    /// Every `(manip, object)` pair.
    pub cross_edges: Vec<(usize, usize)>,
}

/// Manipulator node features. Single-body tools put the center in slots
/// 0..2; each flat node is `[own center, yaw, other center − own center]`.
pub fn manip_features(pose: &ToolPose) -> Vec<[f64; MANIP_FEATURES]> {
    let v = pose.padded();
    match pose.kind {
        ToolKind::DualFlats => {
            let a = [v[0], v[1], v[2]];
            let b = [v[3], v[4], v[5]];
            let node = |c: [f64; 3], o: [f64; 3]| [c[0], c[1], c[2], v[6], o[0] - c[0], o[1] - c[1], o[2] - c[2]];
            vec![node(a, b), node(b, a)]
        }
        _ => vec![[v[0], v[1], v[2], 0.0, 0.0, 0.0, 0.0]],
    }
}

pub fn build_scene_graph(skeleton: &SkeletonGraph, pose: &ToolPose) -> SceneGraph {
    let manip_feats = manip_features(pose);
    let k = skeleton.len();
    let cross_edges = (0..manip_feats.len()).flat_map(|m| (0..k).map(move |o| (m, o))).collect();
    SceneGraph { object_feats: skeleton.features(), manip_feats, object_edges: skeleton.edges.clone(), cross_edges }
}

/// Differentiable manipulator features for a batch of poses `[b, dim]`
/// of one tool kind. Returns `[nodes, 7]` and the scene of each node.
pub fn manip_nodes(tape: &mut Tape, kind: ToolKind, poses: Var) -> Result<(Var, Rc<[usize]>)> {
    let b = tape.value(poses).rows();
    if tape.value(poses).cols() != kind.action_dim() {
        return Err(Error::dim(format!("{kind} poses need {} columns", kind.action_dim())));
    }
    match kind {
        ToolKind::DualFlats => {
            let a = tape.slice_cols(poses, 0, 3)?;
            let c = tape.slice_cols(poses, 3, 3)?;
            let yaw = tape.slice_cols(poses, 6, 1)?;
            let ca = tape.sub(c, a)?;
            let ac = tape.sub(a, c)?;
            let node_a = tape.concat_cols(&[a, yaw, ca])?;
            let node_b = tape.concat_cols(&[c, yaw, ac])?;
            let nodes = tape.concat_rows(&[node_a, node_b])?;
            Ok((nodes, (0..b).chain(0..b).collect()))
        }
        _ => {
            let pad = tape.constant(Tensor::zeros(&[b, MANIP_FEATURES - 3]));
            let nodes = tape.concat_cols(&[poses, pad])?;
            Ok((nodes, (0..b).collect()))
        }
    }
}

/// Training pair aligning the next tool pose with the current shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedSample {
    /// Trajectory index of `skeleton`.
    pub state_index: usize,
    /// Trajectory index of `pose_next`; always `state_index + 1`.
    pub pose_index: usize,
    pub pose_next: ToolPose,
    pub skeleton: SkeletonGraph,
    /// Shape one step later, the source of the prediction target.
    pub skeleton_next: SkeletonGraph,
    pub target_embedding: Option<LatentState>,
}

pub fn shift_dataset(trajectory: &[(SkeletonGraph, ToolPose)]) -> Result<Vec<ShiftedSample>> {
    if trajectory.len() < 2 {
        return Err(Error::InsufficientData(format!("a shifted dataset needs 2 steps, got {}", trajectory.len())));
    }
    Ok(trajectory
        .windows(2)
        .enumerate()
        .map(|(i, w)| ShiftedSample {
            state_index: i,
            pose_index: i + 1,
            pose_next: w[1].1,
            skeleton: w[0].0.clone(),
            skeleton_next: w[1].0.clone(),
            target_embedding: None,
        })
        .collect())
}

/// Object subgraphs of several scenes packed block-diagonally.
#[derive(Clone, Debug)]
pub struct ObjectBatch {
    pub feats: Tensor,
    /// Directed edges (both directions of each link), offset per graph.
    pub edges: Rc<[(usize, usize)]>,
    /// Graph index of each node.
    pub seg: Rc<[usize]>,
    pub graphs: usize,
}

impl ObjectBatch {
    pub fn new(skeletons: &[&SkeletonGraph]) -> Result<Self> {
        if skeletons.is_empty() || skeletons.iter().any(|s| s.is_empty()) {
            return Err(Error::Graph("object batch needs non-empty skeletons".into()));
        }
        let mut feats = Vec::new();
        let mut edges = Vec::new();
        let mut seg = Vec::new();
        for (g, s) in skeletons.iter().enumerate() {
            let base = seg.len();
            feats.extend(s.features().into_iter().flatten());
            edges.extend(s.directed_edges().into_iter().map(|(a, b)| (a + base, b + base)));
            seg.extend(std::iter::repeat_n(g, s.len()));
        }
        Ok(Self {
            feats: Tensor::new(&[seg.len(), OBJECT_FEATURES], feats)?,
            edges: edges.into(),
            seg: seg.into(),
            graphs: skeletons.len(),
        })
    }

    pub fn nodes(&self) -> usize {
        self.seg.len()
    }
}

/// Manipulator nodes of several scenes.
#[derive(Clone, Debug)]
pub struct ManipBatch {
    pub feats: Tensor,
    pub seg: Rc<[usize]>,
    pub graphs: usize,
}

impl ManipBatch {
    pub fn new(poses: &[ToolPose]) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Graph("manipulator batch needs a pose".into()));
        }
        let mut feats = Vec::new();
        let mut seg = Vec::new();
        for (g, p) in poses.iter().enumerate() {
            for node in manip_features(p) {
                feats.extend(node);
                seg.push(g);
            }
        }
        Ok(Self { feats: Tensor::new(&[seg.len(), MANIP_FEATURES], feats)?, seg: seg.into(), graphs: poses.len() })
    }

    pub fn nodes(&self) -> usize {
        self.seg.len()
    }
}

/// Full scene graphs of several scenes.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub objects: ObjectBatch,
    pub manip: ManipBatch,
    /// `(object, manip)` message edges.
    pub object_to_manip: Rc<[(usize, usize)]>,
    /// `(manip, object)` message edges.
    pub manip_to_object: Rc<[(usize, usize)]>,
}

impl GraphBatch {
    pub fn new(skeletons: &[&SkeletonGraph], poses: &[ToolPose]) -> Result<Self> {
        if skeletons.len() != poses.len() {
            return Err(Error::dim(format!("{} skeletons but {} poses", skeletons.len(), poses.len())));
        }
        let objects = ObjectBatch::new(skeletons)?;
        let manip = ManipBatch::new(poses)?;
        Ok(Self::join(objects, manip))
    }

    pub fn from_scenes(scenes: &[&SceneGraph]) -> Result<Self> {
        let skeletons: Vec<SkeletonGraph> =
            scenes.iter().map(|s| SkeletonGraph::from_features(&s.object_feats, s.object_edges.clone())).collect::<Result<_>>()?;
        let refs: Vec<&SkeletonGraph> = skeletons.iter().collect();
        let objects = ObjectBatch::new(&refs)?;
        let mut feats = Vec::new();
        let mut seg = Vec::new();
        for (g, s) in scenes.iter().enumerate() {
            for node in &s.manip_feats {
                feats.extend(node);
                seg.push(g);
            }
        }
        if seg.is_empty() {
            return Err(Error::Graph("scene without manipulator nodes".into()));
        }
        let manip = ManipBatch { feats: Tensor::new(&[seg.len(), MANIP_FEATURES], feats)?, seg: seg.into(), graphs: scenes.len() };
        Ok(Self::join(objects, manip))
    }

    fn join(objects: ObjectBatch, manip: ManipBatch) -> Self {
        let mut om = Vec::new();
        for (m, &gm) in manip.seg.iter().enumerate() {
            for (o, &go) in objects.seg.iter().enumerate() {
                if go == gm {
                    om.push((o, m));
                }
            }
        }
        let mo: Vec<(usize, usize)> = om.iter().map(|&(o, m)| (m, o)).collect();
        Self { objects, manip, object_to_manip: om.into(), manip_to_object: mo.into() }
    }
}
