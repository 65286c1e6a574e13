//! Parameterized layers built on the tape.

use std::rc::Rc;

use rand::Rng;

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Weight initialization for [`Linear`].
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanIn,
    /// `N(0, std²)`.
    Normal(f64),
    Zeros,
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, init: Init, rng: &mut impl Rng) -> Self {
        let w = match init {
            Init::FanIn => store.add_uniform(&format!("{name}.w"), &[d_in, d_out], 1.0 / (d_in as f64).sqrt(), rng),
            Init::Normal(std) => store.add_normal(&format!("{name}.w"), &[d_in, d_out], std, rng),
            Init::Zeros => store.add(format!("{name}.w"), Tensor::zeros(&[d_in, d_out])),
        };
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[d_out]));
        Self { w, b, d_in, d_out }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.affine(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::full(&[d], 1.0));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d]));
        Self { gain, bias, eps: 1e-5 }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b, self.eps)
    }
}

/// Keys and values of every position seen so far, for incremental decoding.
#[derive(Clone, Debug, Default)]
pub struct KvCache {
    pub keys: Vec<Var>,
    pub values: Vec<Var>,
}

/// Multi-head causal self-attention with input and output projections.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, out_std: f64, rng: &mut impl Rng) -> Self {
        let init = Init::Normal(0.02);
        Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, init, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, init, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, init, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, Init::Normal(out_std), rng),
            heads,
        }
    }

    /// `x` packs `batch` sequences of length `seq` as `[batch*seq, d]`.
    pub fn forward_seq(&self, tape: &mut Tape, store: &ParamStore, x: Var, batch: usize, seq: usize) -> Result<Var> {
        let q = self.q.forward(tape, store, x)?;
        let k = self.k.forward(tape, store, x)?;
        let v = self.v.forward(tape, store, x)?;
        let a = tape.causal_attention(q, k, v, batch, seq, self.heads)?;
        self.o.forward(tape, store, a)
    }

    /// Processes one new position `x: [batch, d]`, appending to `cache`.
    pub fn forward_step(&self, tape: &mut Tape, store: &ParamStore, x: Var, cache: &mut KvCache) -> Result<Var> {
        let q = self.q.forward(tape, store, x)?;
        cache.keys.push(self.k.forward(tape, store, x)?);
        cache.values.push(self.v.forward(tape, store, x)?);
        let a = tape.attend_step(q, &cache.keys, &cache.values, self.heads)?;
        self.o.forward(tape, store, a)
    }
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `x + mlp(ln(x))`
/// with a 4× GELU expansion.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: SelfAttention,
    pub ln2: LayerNorm,
    pub fc: Linear,
    pub proj: Linear,
}

impl TransformerBlock {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, n_layers: usize, rng: &mut impl Rng) -> Self {
        // GPT-2 scales residual-path projections by 1/sqrt(2·layers).
        let out_std = 0.02 / ((2 * n_layers) as f64).sqrt();
        Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            attn: SelfAttention::new(store, &format!("{name}.attn"), d, heads, out_std, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            fc: Linear::new(store, &format!("{name}.fc"), d, 4 * d, Init::Normal(0.02), rng),
            proj: Linear::new(store, &format!("{name}.proj"), 4 * d, d, Init::Normal(out_std), rng),
        }
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.ln2.forward(tape, store, x)?;
        let h = self.fc.forward(tape, store, h)?;
        let h = tape.gelu(h);
        let h = self.proj.forward(tape, store, h)?;
        tape.add(x, h)
    }

    pub fn forward_seq(&self, tape: &mut Tape, store: &ParamStore, x: Var, batch: usize, seq: usize) -> Result<Var> {
        let h = self.ln1.forward(tape, store, x)?;
        let h = self.attn.forward_seq(tape, store, h, batch, seq)?;
        let x = tape.add(x, h)?;
        self.mlp(tape, store, x)
    }

    pub fn forward_step(&self, tape: &mut Tape, store: &ParamStore, x: Var, cache: &mut KvCache) -> Result<Var> {
        let h = self.ln1.forward(tape, store, x)?;
        let h = self.attn.forward_step(tape, store, h, cache)?;
        let x = tape.add(x, h)?;
        self.mlp(tape, store, x)
    }
}

/// Homogeneous graph layer (mean aggregation, tanh activation).
#[derive(Clone, Debug)]
pub struct GraphLayer {
    pub w_self: ParamId,
    pub w_neigh: ParamId,
    pub bias: ParamId,
}

impl GraphLayer {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            w_self: store.add_uniform(&format!("{name}.w_self"), &[d_in, d_out], bound, rng),
            w_neigh: store.add_uniform(&format!("{name}.w_neigh"), &[d_in, d_out], bound, rng),
            bias: store.add(format!("{name}.b"), Tensor::zeros(&[d_out])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, edges: Rc<[(usize, usize)]>) -> Result<Var> {
        let n = tape.value(x).rows();
        let ws = tape.param(store, self.w_self);
        let wn = tape.param(store, self.w_neigh);
        let b = tape.param(store, self.bias);
        let own = tape.matmul(x, ws)?;
        let agg = tape.mean_aggregate(x, edges, n)?;
        let nb = tape.matmul(agg, wn)?;
        let pre = tape.add(own, nb)?;
        let pre = tape.add_row(pre, b)?;
        Ok(tape.tanh(pre))
    }
}

/// Fully connected stack with ReLU between layers and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        let layers =
            dims.windows(2).enumerate().map(|(i, w)| Linear::new(store, &format!("{name}.l{i}"), w[0], w[1], Init::FanIn, rng)).collect();
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(tape, store, x)?;
            if i < last {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }
}
