//! Two-stage graph encoder: a homogeneous layer over the object subgraph,
//! then a relation-typed layer over the whole scene.

use std::path::Path;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GraphBatch, LatentState, ManipBatch, ObjectBatch, SceneGraph, EMBED_DIM, MANIP_FEATURES, OBJECT_FEATURES};
use crate::error::Result;
use crate::sim::ToolPose;
use crate::skeleton::SkeletonGraph;
use crate::tensor::nn::GraphLayer;
use crate::tensor::{load_checkpoint, save_checkpoint, ParamId, ParamStore, Tape, Tensor, Var};

/// Raw features sit near the workspace centre with a spread of about a
/// tenth of its side, which leaves tanh units nearly linear and the
/// embeddings nearly constant. Each column maps to `(v - centre) / scale`.
const OBJECT_SCALE: [(f64, f64); OBJECT_FEATURES] = [(0.5, 0.1), (0.5, 0.1), (0.5, 0.1), (0.0, 0.05)];
const MANIP_SCALE: [(f64, f64); MANIP_FEATURES] = [(0.5, 0.1), (0.5, 0.1), (0.5, 0.1), (0.0, 1.0), (0.0, 0.1), (0.0, 0.1), (0.0, 0.1)];

fn standardize(tape: &mut Tape, x: Var, cols: &[(f64, f64)]) -> Result<Var> {
    let n = cols.len();
    let mut w = Tensor::zeros(&[n, n]);
    let mut b = Tensor::zeros(&[n]);
    for (i, &(centre, scale)) in cols.iter().enumerate() {
        w.data_mut()[i * n + i] = 1.0 / scale;
        b.data_mut()[i] = -centre / scale;
    }
    let (w, b) = (tape.constant(w), tape.constant(b));
    tape.affine(x, w, b)
}

#[derive(Clone, Debug)]
pub struct GraphEncoder {
    pub store: ParamStore,
    object_layer: GraphLayer,
    w_self_obj: ParamId,
    b_obj: ParamId,
    w_self_manip: ParamId,
    b_manip: ParamId,
    /// object → object over skeleton links.
    w_oo: ParamId,
    /// object → manipulator.
    w_om: ParamId,
    /// manipulator → object.
    w_mo: ParamId,
}

impl GraphEncoder {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let object_layer = GraphLayer::new(&mut store, "enc.object", OBJECT_FEATURES, EMBED_DIM, rng);
        let (d, m) = (EMBED_DIM, MANIP_FEATURES);
        let hd = 1.0 / (d as f64).sqrt();
        let hm = 1.0 / (m as f64).sqrt();
        let w_self_obj = store.add_uniform("enc.scene.w_self_obj", &[d, d], hd, rng);
        let b_obj = store.add("enc.scene.b_obj", Tensor::zeros(&[d]));
        let w_self_manip = store.add_uniform("enc.scene.w_self_manip", &[m, d], hm, rng);
        let b_manip = store.add("enc.scene.b_manip", Tensor::zeros(&[d]));
        let w_oo = store.add_uniform("enc.scene.w_oo", &[d, d], hd, rng);
        let w_om = store.add_uniform("enc.scene.w_om", &[d, d], hd, rng);
        let w_mo = store.add_uniform("enc.scene.w_mo", &[m, d], hm, rng);
        Self { store, object_layer, w_self_obj, b_obj, w_self_manip, b_manip, w_oo, w_om, w_mo }
    }

    /// Stage 1 per-node features, `[nodes, 32]`.
    pub fn object_nodes(&self, tape: &mut Tape, batch: &ObjectBatch) -> Result<Var> {
        let x = tape.constant(batch.feats.clone());
        let x = standardize(tape, x, &OBJECT_SCALE)?;
        self.object_layer.forward(tape, &self.store, x, batch.edges.clone())
    }

    /// Object embeddings ε, one row per graph.
    pub fn encode_objects(&self, tape: &mut Tape, batch: &ObjectBatch) -> Result<Var> {
        let h = self.object_nodes(tape, batch)?;
        tape.segment_mean(h, batch.seg.clone(), batch.graphs)
    }

    /// Stage 2 over full scenes given stage-1 node features.
    pub fn encode_scene(&self, tape: &mut Tape, batch: &GraphBatch, nodes: Var) -> Result<Var> {
        let n_obj = batch.objects.nodes();
        let n_manip = batch.manip.nodes();
        let manip = tape.constant(batch.manip.feats.clone());
        let manip = standardize(tape, manip, &MANIP_SCALE)?;

        let own = self.self_term(tape, nodes, self.w_self_obj, self.b_obj)?;
        let oo = tape.mean_aggregate(nodes, batch.objects.edges.clone(), n_obj)?;
        let oo = self.relation(tape, oo, self.w_oo)?;
        let mo = tape.mean_aggregate(manip, batch.manip_to_object.clone(), n_obj)?;
        let mo = self.relation(tape, mo, self.w_mo)?;
        let obj = tape.add(own, oo)?;
        let obj = tape.add(obj, mo)?;
        let obj = tape.tanh(obj);

        let own_m = self.self_term(tape, manip, self.w_self_manip, self.b_manip)?;
        let om = tape.mean_aggregate(nodes, batch.object_to_manip.clone(), n_manip)?;
        let om = self.relation(tape, om, self.w_om)?;
        let man = tape.add(own_m, om)?;
        let man = tape.tanh(man);

        let all = tape.concat_rows(&[obj, man])?;
        let seg: Rc<[usize]> = batch.objects.seg.iter().chain(batch.manip.seg.iter()).copied().collect();
        tape.segment_mean(all, seg, batch.manip.graphs)
    }

    /// Stage 2 with each scene's object subgraph replaced by one surrogate
    /// node carrying the embedding row of `eps`.
    pub fn encode_with_predicted(&self, tape: &mut Tape, eps: Var, manip: &ManipBatch) -> Result<Var> {
        let m_feats = tape.constant(manip.feats.clone());
        self.encode_with_predicted_nodes(tape, eps, m_feats, &manip.seg)
    }

    /// [`Self::encode_with_predicted`] with differentiable manipulator
    /// features `manip: [nodes, 7]`; `seg[m]` is the scene of node `m`.
    pub fn encode_with_predicted_nodes(&self, tape: &mut Tape, eps: Var, manip: Var, seg: &Rc<[usize]>) -> Result<Var> {
        let b = tape.value(eps).rows();
        let manip = standardize(tape, manip, &MANIP_SCALE)?;
        let om: Rc<[(usize, usize)]> = seg.iter().enumerate().map(|(m, &g)| (g, m)).collect();
        let mo: Rc<[(usize, usize)]> = seg.iter().enumerate().map(|(m, &g)| (m, g)).collect();

        let own = self.self_term(tape, eps, self.w_self_obj, self.b_obj)?;
        let from_m = tape.mean_aggregate(manip, mo, b)?;
        let from_m = self.relation(tape, from_m, self.w_mo)?;
        let obj = tape.add(own, from_m)?;
        let obj = tape.tanh(obj);

        let own_m = self.self_term(tape, manip, self.w_self_manip, self.b_manip)?;
        let from_o = tape.mean_aggregate(eps, om, seg.len())?;
        let from_o = self.relation(tape, from_o, self.w_om)?;
        let man = tape.add(own_m, from_o)?;
        let man = tape.tanh(man);

        let all = tape.concat_rows(&[obj, man])?;
        let pool: Rc<[usize]> = (0..b).chain(seg.iter().copied()).collect();
        tape.segment_mean(all, pool, b)
    }

    fn self_term(&self, tape: &mut Tape, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let (w, b) = (tape.param(&self.store, w), tape.param(&self.store, b));
        tape.affine(x, w, b)
    }

    fn relation(&self, tape: &mut Tape, agg: Var, w: ParamId) -> Result<Var> {
        let w = tape.param(&self.store, w);
        tape.matmul(agg, w)
    }

    /// `(object_embedding, scene_embedding)` of one scene graph.
    pub fn encode(&self, graph: &SceneGraph) -> Result<(LatentState, LatentState)> {
        let batch = GraphBatch::from_scenes(&[graph])?;
        let mut tape = Tape::new();
        let nodes = self.object_nodes(&mut tape, &batch.objects)?;
        let eps = tape.segment_mean(nodes, batch.objects.seg.clone(), 1)?;
        let scene = self.encode_scene(&mut tape, &batch, nodes)?;
        Ok((LatentState::from_slice(tape.value(eps).data())?, LatentState::from_slice(tape.value(scene).data())?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.store, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut encoder = Self::new(&mut ChaCha8Rng::seed_from_u64(0));
        load_checkpoint(&mut encoder.store, path)?;
        Ok(encoder)
    }

    /// Object embeddings of several skeletons, without gradients.
    pub fn embed_objects(&self, skeletons: &[&SkeletonGraph]) -> Result<Vec<LatentState>> {
        let batch = ObjectBatch::new(skeletons)?;
        let mut tape = Tape::new();
        let eps = self.encode_objects(&mut tape, &batch)?;
        Ok(LatentState::unstack(tape.value(eps)))
    }

    /// Scene embeddings from (object embedding, pose) pairs, without gradients.
    pub fn embed_predicted(&self, eps: &[LatentState], poses: &[ToolPose]) -> Result<Vec<LatentState>> {
        let manip = ManipBatch::new(poses)?;
        let mut tape = Tape::new();
        let e = tape.constant(LatentState::stack(eps));
        let s = self.encode_with_predicted(&mut tape, e, &manip)?;
        Ok(LatentState::unstack(tape.value(s)))
    }
}
