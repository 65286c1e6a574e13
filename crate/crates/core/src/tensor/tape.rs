//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! A [`Tape`] lives for one forward/backward pass. Parameters enter through
//! [`Tape::param`], which remembers the owning store, so gradients can be
//! accumulated back with [`ParamStore::accumulate`].

use std::collections::HashMap;
use std::rc::Rc;

use super::kernels;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Const,
    Param { store: u64, id: ParamId },
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Gelu(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    SumAll(Var),
    MeanAll(Var),
    RowSum(Var),
    ColMean(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    CausalAttention { q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize, probs: Vec<f64> },
    AttendStep { q: Var, keys: Vec<Var>, values: Vec<Var>, heads: usize, probs: Vec<f64> },
    MeanAggregate { x: Var, edges: Rc<[(usize, usize)]>, deg: Vec<usize> },
    SegmentMean { x: Var, seg: Rc<[usize]>, counts: Vec<usize> },
    GatherRows { x: Var, idx: Rc<[usize]> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_cache: HashMap<(u64, usize), Var>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.rows() == b.rows() && a.cols() == b.cols() {
        Ok(())
    } else {
        Err(Error::dim(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn mat(shape_rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::from_raw(vec![shape_rows, cols], data)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const)
    }

    /// Brings a stored parameter onto the tape. Repeated calls for the same
    /// parameter return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.uid(), id.0);
        if let Some(&v) = self.param_cache.get(&key) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param { store: store.uid(), id });
        self.param_cache.insert(key, v);
        v
    }

    /// Copies a value as a constant: gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(Error::dim(format!("matmul {:?} x {:?}", ta.shape(), tb.shape())));
        }
        let out = kernels::matmul(ta, tb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a bias row (any tensor with `cols` values) to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = tx.cols();
        if tb.numel() != c {
            return Err(Error::dim(format!("bias {:?} for rows of width {c}", tb.shape())));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let out = mat(tx.rows(), c, data);
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, what)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = mat(ta.rows(), ta.cols(), data);
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "min", |x, y| if x <= y { x } else { y }, Op::Min(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        self.push(out, op)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::Offset(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, kernels::gelu, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.sum() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(x))
    }

    /// `[n, m] → [n, 1]` sums along each row.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let out = mat(t.rows(), 1, data);
        self.push(out, Op::RowSum(x))
    }

    /// `[n, m] → [1, m]` means over rows.
    pub fn col_mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, m) = (t.rows(), t.cols());
        let mut data = vec![0.0; m];
        for r in 0..n {
            for (acc, v) in data.iter_mut().zip(t.row_slice(r)) {
                *acc += v;
            }
        }
        data.iter_mut().for_each(|v| *v /= n as f64);
        self.push(mat(1, m, data), Op::ColMean(x))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.cols();
        if tg.numel() != d || tb.numel() != d {
            return Err(Error::dim(format!("layer norm over width {d} with gain {:?}", tg.shape())));
        }
        let (y, xhat, inv_std) = kernels::layer_norm_forward(tx, tg.data(), tb.data(), eps);
        Ok(self.push(y, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    /// Causal scaled dot-product attention on already-projected queries,
    /// keys and values packed as `[batch*seq, d]`.
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
        }
        if tq.rows() != batch * seq {
            return Err(Error::dim(format!("{} rows for batch {batch} x seq {seq}", tq.rows())));
        }
        same_shape(tq, tk, "attention keys")?;
        same_shape(tq, tv, "attention values")?;
        let (out, probs) = kernels::causal_attention_forward(tq, tk, tv, batch, seq, heads);
        Ok(self.push(out, Op::CausalAttention { q, k, v, batch, seq, heads, probs }))
    }

    /// Attention of a single new position over cached keys/values (the new
    /// position's own key and value must be the last entries).
    pub fn attend_step(&mut self, q: Var, keys: &[Var], values: &[Var], heads: usize) -> Result<Var> {
        let tq = self.value(q);
        let d = tq.cols();
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
        }
        if keys.is_empty() || keys.len() != values.len() {
            return Err(Error::dim("attend_step needs matching non-empty key/value caches"));
        }
        for &k in keys.iter().chain(values) {
            same_shape(tq, self.value(k), "attention cache")?;
        }
        let kt: Vec<&Tensor> = keys.iter().map(|&k| self.value(k)).collect();
        let vt: Vec<&Tensor> = values.iter().map(|&k| self.value(k)).collect();
        let (out, probs) = kernels::attend_step_forward(tq, &kt, &vt, heads);
        Ok(self.push(out, Op::AttendStep { q, keys: keys.to_vec(), values: values.to_vec(), heads, probs }))
    }

    /// Mean over in-neighbors for each of `n_dst` destination nodes.
    pub fn mean_aggregate(&mut self, x: Var, edges: Rc<[(usize, usize)]>, n_dst: usize) -> Result<Var> {
        let n_src = self.value(x).rows();
        if let Some(&(s, t)) = edges.iter().find(|&&(s, t)| s >= n_src || t >= n_dst) {
            return Err(Error::Graph(format!("edge ({s}, {t}) out of range for {n_src} sources / {n_dst} targets")));
        }
        let (out, deg) = kernels::mean_aggregate(self.value(x), &edges, n_dst);
        Ok(self.push(out, Op::MeanAggregate { x, edges, deg }))
    }

    /// Mean of rows grouped by segment id (`seg[r] < n_seg`).
    pub fn segment_mean(&mut self, x: Var, seg: Rc<[usize]>, n_seg: usize) -> Result<Var> {
        let t = self.value(x);
        if seg.len() != t.rows() || seg.iter().any(|&s| s >= n_seg) {
            return Err(Error::dim("segment ids do not match rows"));
        }
        let m = t.cols();
        let mut data = vec![0.0; n_seg * m];
        let mut counts = vec![0usize; n_seg];
        for (r, &s) in seg.iter().enumerate() {
            counts[s] += 1;
            for (acc, v) in data[s * m..(s + 1) * m].iter_mut().zip(t.row_slice(r)) {
                *acc += v;
            }
        }
        for s in 0..n_seg {
            if counts[s] > 0 {
                let inv = counts[s] as f64;
                data[s * m..(s + 1) * m].iter_mut().for_each(|v| *v /= inv);
            }
        }
        Ok(self.push(mat(n_seg, m, data), Op::SegmentMean { x, seg, counts }))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Rc<[usize]>) -> Result<Var> {
        let t = self.value(x);
        if idx.iter().any(|&i| i >= t.rows()) {
            return Err(Error::dim("gather index out of range"));
        }
        let m = t.cols();
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in idx.iter() {
            data.extend_from_slice(t.row_slice(i));
        }
        Ok(self.push(mat(idx.len(), m, data), Op::GatherRows { x, idx }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != n) {
            return Err(Error::dim("concat_cols needs equal row counts"));
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        Ok(self.push(mat(n, total, data), Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != m) {
            return Err(Error::dim("concat_rows needs equal widths"));
        }
        let mut data = Vec::new();
        let mut n = 0;
        for &p in parts {
            let t = self.value(p);
            n += t.rows();
            data.extend_from_slice(t.data());
        }
        Ok(self.push(mat(n, m, data), Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if start + len > t.cols() || len == 0 {
            return Err(Error::dim("slice_cols out of range"));
        }
        let mut data = Vec::with_capacity(t.rows() * len);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        Ok(self.push(mat(t.rows(), len, data), Op::SliceCols { x, start }))
    }

    /// `x · W + b` row-wise.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_row(h, b)
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Usage(format!("backward needs a scalar loss, got shape {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let like = |v: Var, data: Vec<f64>| Tensor::from_raw(self.value(v).shape().to_vec(), data);
        match &node.op {
            Op::Const | Op::Param { .. } => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = kernels::gemm(g, false, tb, true);
                let db = kernels::gemm(ta, true, g, false);
                acc(*a, like(*a, da.into_data()));
                acc(*b, like(*b, db.into_data()));
            }
            Op::AddRow(x, b) => {
                let c = g.cols();
                let mut db = vec![0.0; c];
                for row in g.data().chunks(c) {
                    for (acc_b, v) in db.iter_mut().zip(row) {
                        *acc_b += v;
                    }
                }
                acc(*x, g.clone());
                acc(*b, like(*b, db));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                let db = g.data().iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                acc(*a, like(*a, da));
                acc(*b, like(*b, db));
            }
            Op::Min(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut da = vec![0.0; g.numel()];
                let mut db = vec![0.0; g.numel()];
                for k in 0..g.numel() {
                    if ta.data()[k] <= tb.data()[k] {
                        da[k] = g.data()[k];
                    } else {
                        db[k] = g.data()[k];
                    }
                }
                acc(*a, like(*a, da));
                acc(*b, like(*b, db));
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| v * c)),
            Op::Offset(x) => acc(*x, g.clone()),
            Op::Tanh(x) => {
                let d = g.data().iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                acc(*x, like(*x, d));
            }
            Op::Gelu(x) => {
                let d = g.data().iter().zip(self.value(*x).data()).map(|(g, &v)| g * kernels::gelu_grad(v)).collect();
                acc(*x, like(*x, d));
            }
            Op::Relu(x) => {
                let d = g.data().iter().zip(self.value(*x).data()).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                acc(*x, like(*x, d));
            }
            Op::Exp(x) => {
                let d = g.data().iter().zip(out.data()).map(|(g, y)| g * y).collect();
                acc(*x, like(*x, d));
            }
            Op::Log(x) => {
                let d = g.data().iter().zip(self.value(*x).data()).map(|(g, v)| g / v).collect();
                acc(*x, like(*x, d));
            }
            Op::Sqrt(x) => {
                let d = g.data().iter().zip(out.data()).map(|(g, y)| g * 0.5 / y).collect();
                acc(*x, like(*x, d));
            }
            Op::Square(x) => {
                let d = g.data().iter().zip(self.value(*x).data()).map(|(g, v)| 2.0 * g * v).collect();
                acc(*x, like(*x, d));
            }
            Op::SumAll(x) => {
                let t = self.value(*x);
                acc(*x, Tensor::full(t.shape(), g.item()));
            }
            Op::MeanAll(x) => {
                let t = self.value(*x);
                acc(*x, Tensor::full(t.shape(), g.item() / t.numel() as f64));
            }
            Op::RowSum(x) => {
                let t = self.value(*x);
                let m = t.cols();
                let mut d = Vec::with_capacity(t.numel());
                for r in 0..t.rows() {
                    d.extend(std::iter::repeat_n(g.data()[r], m));
                }
                acc(*x, like(*x, d));
            }
            Op::ColMean(x) => {
                let t = self.value(*x);
                let n = t.rows();
                let mut d = Vec::with_capacity(t.numel());
                for _ in 0..n {
                    d.extend(g.data().iter().map(|v| v / n as f64));
                }
                acc(*x, like(*x, d));
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let tg = self.value(*gain);
                let (dx, dg, db) = kernels::layer_norm_backward(g, xhat, inv_std, tg.data());
                acc(*x, like(*x, dx));
                acc(*gain, like(*gain, dg));
                acc(*bias, like(*bias, db));
            }
            Op::CausalAttention { q, k, v, batch, seq, heads, probs } => {
                let (dq, dk, dv) =
                    kernels::causal_attention_backward(g, self.value(*q), self.value(*k), self.value(*v), probs, *batch, *seq, *heads);
                acc(*q, like(*q, dq));
                acc(*k, like(*k, dk));
                acc(*v, like(*v, dv));
            }
            Op::AttendStep { q, keys, values, heads, probs } => {
                let kt: Vec<&Tensor> = keys.iter().map(|&k| self.value(k)).collect();
                let vt: Vec<&Tensor> = values.iter().map(|&k| self.value(k)).collect();
                let (dq, dk, dv) = kernels::attend_step_backward(g, self.value(*q), &kt, &vt, probs, *heads);
                acc(*q, like(*q, dq));
                for (k, d) in keys.iter().zip(dk) {
                    acc(*k, like(*k, d));
                }
                for (v, d) in values.iter().zip(dv) {
                    acc(*v, like(*v, d));
                }
            }
            Op::MeanAggregate { x, edges, deg } => {
                let t = self.value(*x);
                let m = t.cols();
                let mut d = vec![0.0; t.numel()];
                for &(s, dst) in edges.iter() {
                    let w = 1.0 / deg[dst] as f64;
                    for c in 0..m {
                        d[s * m + c] += g.data()[dst * m + c] * w;
                    }
                }
                acc(*x, like(*x, d));
            }
            Op::SegmentMean { x, seg, counts } => {
                let t = self.value(*x);
                let m = t.cols();
                let mut d = Vec::with_capacity(t.numel());
                for &s in seg.iter() {
                    let w = 1.0 / counts[s] as f64;
                    d.extend(g.data()[s * m..(s + 1) * m].iter().map(|v| v * w));
                }
                acc(*x, like(*x, d));
            }
            Op::GatherRows { x, idx } => {
                let t = self.value(*x);
                let m = t.cols();
                let mut d = vec![0.0; t.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..m {
                        d[i * m + c] += g.data()[r * m + c];
                    }
                }
                acc(*x, like(*x, d));
            }
            Op::ConcatCols(parts) => {
                let n = g.rows();
                let total = g.cols();
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut d = Vec::with_capacity(n * w);
                    for r in 0..n {
                        d.extend_from_slice(&g.data()[r * total + start..r * total + start + w]);
                    }
                    acc(p, like(p, d));
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    acc(p, like(p, g.data()[start..start + len].to_vec()));
                    start += len;
                }
            }
            Op::SliceCols { x, start } => {
                let t = self.value(*x);
                let (n, m, w) = (t.rows(), t.cols(), g.cols());
                let mut d = vec![0.0; t.numel()];
                for r in 0..n {
                    d[r * m + start..r * m + start + w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                acc(*x, like(*x, d));
            }
        }
    }

    /// Iterates over `(store uid, param id, var)` for every parameter leaf.
    pub(crate) fn param_leaves(&self) -> impl Iterator<Item = (u64, ParamId, Var)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param { store, id } => Some((store, id, Var(i))),
            _ => None,
        })
    }
}

impl ParamStore {
    /// Adds the gradients of this store's parameters from `grads` into the
    /// stored gradient buffers. Parameters untouched by the loss keep their
    /// current (typically zero) gradient.
    pub fn accumulate(&mut self, tape: &Tape, grads: &Grads) {
        let uid = self.uid();
        for (store, id, var) in tape.param_leaves() {
            if store != uid {
                continue;
            }
            if let Some(g) = grads.get(var) {
                self.get_mut(id).grad.add_assign(g);
            }
        }
    }
}
