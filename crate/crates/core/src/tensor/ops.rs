//! Plain-tensor entry points for the differentiable building blocks.
//!
//! Each function records onto a throwaway [`Tape`] so the values are exactly
//! the ones the training path produces.

use std::rc::Rc;

use super::{Tape, Tensor};
use crate::error::{Error, Result};

/// `y = x·W + b`, row-wise.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.cols() != w.rows() || b.numel() != w.cols() {
        return Err(Error::dim(format!("affine x{:?} W{:?} b{:?}", x.shape(), w.shape(), b.shape())));
    }
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
    let y = tape.affine(xv, wv, bv)?;
    Ok(tape.value(y).clone())
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    if eps <= 0.0 {
        return Err(Error::Config("layer norm eps must be positive".into()));
    }
    let mut tape = Tape::new();
    let (xv, gv, bv) = (tape.constant(x.clone()), tape.constant(gain.clone()), tape.constant(bias.clone()));
    let y = tape.layer_norm(xv, gv, bv, eps)?;
    Ok(tape.value(y).clone())
}

/// Projection weights of one multi-head self-attention layer. All matrices
/// are `[d, d]` and all biases have `d` values.
#[derive(Clone, Debug)]
pub struct AttentionWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

impl AttentionWeights {
    /// Identity projections with zero biases.
    pub fn identity(d: usize) -> Self {
        let i = Tensor::identity(d);
        let z = Tensor::zeros(&[d]);
        Self { wq: i.clone(), bq: z.clone(), wk: i.clone(), bk: z.clone(), wv: i.clone(), bv: z.clone(), wo: i, bo: z }
    }
}

/// Multi-head causal self-attention over a `[T, d]` sequence followed by
/// the output projection.
pub fn causal_attention(seq: &Tensor, heads: usize, w: &AttentionWeights) -> Result<Tensor> {
    let d = seq.cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
    }
    let mut tape = Tape::new();
    let x = tape.constant(seq.clone());
    let proj = |tape: &mut Tape, wm: &Tensor, b: &Tensor| -> Result<_> {
        let (wv, bv) = (tape.constant(wm.clone()), tape.constant(b.clone()));
        tape.affine(x, wv, bv)
    };
    let q = proj(&mut tape, &w.wq, &w.bq)?;
    let k = proj(&mut tape, &w.wk, &w.bk)?;
    let v = proj(&mut tape, &w.wv, &w.bv)?;
    let att = tape.causal_attention(q, k, v, 1, seq.rows(), heads)?;
    let (wo, bo) = (tape.constant(w.wo.clone()), tape.constant(w.bo.clone()));
    let y = tape.affine(att, wo, bo)?;
    Ok(tape.value(y).clone())
}

/// One graph layer: `out[i] = tanh(x[i]·W_self + mean_{j→i} x[j]·W_neigh + b)`.
/// Nodes without in-neighbors only receive the self term.
pub fn message_pass(
    node_feats: &Tensor,
    edges: &[(usize, usize)],
    w_self: &Tensor,
    w_neigh: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    let n = node_feats.rows();
    if let Some(&(s, t)) = edges.iter().find(|&&(s, t)| s >= n || t >= n) {
        return Err(Error::Graph(format!("edge ({s}, {t}) out of range for {n} nodes")));
    }
    let mut tape = Tape::new();
    let x = tape.constant(node_feats.clone());
    let ws = tape.constant(w_self.clone());
    let wn = tape.constant(w_neigh.clone());
    let own = tape.matmul(x, ws)?;
    let agg = tape.mean_aggregate(x, Rc::from(edges), n)?;
    let nb = tape.matmul(agg, wn)?;
    let mut pre = tape.add(own, nb)?;
    if let Some(b) = bias {
        let bv = tape.constant(b.clone());
        pre = tape.add_row(pre, bv)?;
    }
    let y = tape.tanh(pre);
    Ok(tape.value(y).clone())
}
