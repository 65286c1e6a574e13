//! Raw numeric kernels shared by the tape and the functional API.

use super::Tensor;

/// `C = op(A) · op(B)` where `op` optionally transposes. Shapes are the
/// logical (post-transpose) shapes `m×k` and `k×n`.
pub(crate) fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "gemm inner dimensions disagree");
    let mut out = vec![0.0; m * n];
    // Strides of the logical operands in the row-major storage.
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: the pointers cover `m*k`, `k*n` and `m*n` elements laid out
        // with the strides computed above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Tensor::from_raw(vec![m, n], out)
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    gemm(a, false, b, false)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise layer normalization. Returns `(y, xhat, inv_std)`.
pub(crate) fn layer_norm_forward(x: &Tensor, gain: &[f64], bias: &[f64], eps: f64) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv_std = vec![0.0; n];
    for r in 0..n {
        let row = x.row_slice(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for c in 0..d {
            let h = (row[c] - mean) * is;
            xhat[r * d + c] = h;
            y[r * d + c] = h * gain[c] + bias[c];
        }
    }
    (Tensor::from_raw(x.shape().to_vec(), y), xhat, inv_std)
}

/// Gradients of layer normalization: `(dx, dgain, dbias)`.
pub(crate) fn layer_norm_backward(dy: &Tensor, xhat: &[f64], inv_std: &[f64], gain: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, d) = (dy.rows(), dy.cols());
    let mut dx = vec![0.0; n * d];
    let mut dgain = vec![0.0; d];
    let mut dbias = vec![0.0; d];
    let g = dy.data();
    for r in 0..n {
        let mut mean_dh = 0.0;
        let mut mean_dh_h = 0.0;
        for c in 0..d {
            let i = r * d + c;
            dgain[c] += g[i] * xhat[i];
            dbias[c] += g[i];
            let dh = g[i] * gain[c];
            mean_dh += dh;
            mean_dh_h += dh * xhat[i];
        }
        mean_dh /= d as f64;
        mean_dh_h /= d as f64;
        for c in 0..d {
            let i = r * d + c;
            let dh = g[i] * gain[c];
            dx[i] = inv_std[r] * (dh - mean_dh - xhat[i] * mean_dh_h);
        }
    }
    (dx, dgain, dbias)
}

/// Softmax over a prefix of attention scores for one query, in place.
fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Layout of attention probabilities: for each `(batch, head, query i)` a
/// contiguous run of `i+1` weights over keys `0..=i`.
pub(crate) fn tri_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Multi-head causal attention over `batch` sequences of length `seq`,
/// packed as `[batch*seq, d]` rows. Returns the attended values and the
/// probabilities needed for the backward pass.
pub(crate) fn causal_attention_forward(q: &Tensor, k: &Tensor, v: &Tensor, batch: usize, seq: usize, heads: usize) -> (Tensor, Vec<f64>) {
    let d = q.cols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let tri = tri_offset(seq);
    let mut probs = vec![0.0; batch * heads * tri];
    let mut out = vec![0.0; batch * seq * d];
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut scores = Vec::with_capacity(seq);
    for b in 0..batch {
        for h in 0..heads {
            let col = h * dh;
            let pbase = (b * heads + h) * tri;
            for i in 0..seq {
                let qi = &qd[(b * seq + i) * d + col..(b * seq + i) * d + col + dh];
                scores.clear();
                for j in 0..=i {
                    let kj = &kd[(b * seq + j) * d + col..(b * seq + j) * d + col + dh];
                    scores.push(dot(qi, kj) * scale);
                }
                softmax_in_place(&mut scores);
                let prow = pbase + tri_offset(i);
                probs[prow..prow + i + 1].copy_from_slice(&scores);
                let orow = (b * seq + i) * d + col;
                for (j, p) in scores.iter().enumerate() {
                    let vj = &vd[(b * seq + j) * d + col..(b * seq + j) * d + col + dh];
                    for c in 0..dh {
                        out[orow + c] += p * vj[c];
                    }
                }
            }
        }
    }
    (Tensor::from_raw(vec![batch * seq, d], out), probs)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn causal_attention_backward(
    dout: &Tensor,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    probs: &[f64],
    batch: usize,
    seq: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = q.cols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let tri = tri_offset(seq);
    let n = batch * seq * d;
    let (mut dq, mut dk, mut dv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (qd, kd, vd, gd) = (q.data(), k.data(), v.data(), dout.data());
    let mut dp = Vec::with_capacity(seq);
    for b in 0..batch {
        for h in 0..heads {
            let col = h * dh;
            let pbase = (b * heads + h) * tri;
            for i in 0..seq {
                let grow = (b * seq + i) * d + col;
                let go = &gd[grow..grow + dh];
                let p = &probs[pbase + tri_offset(i)..pbase + tri_offset(i) + i + 1];
                dp.clear();
                for j in 0..=i {
                    let vrow = (b * seq + j) * d + col;
                    dp.push(dot(go, &vd[vrow..vrow + dh]));
                    for c in 0..dh {
                        dv[vrow + c] += p[j] * go[c];
                    }
                }
                let inner: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                let qrow = (b * seq + i) * d + col;
                for j in 0..=i {
                    let ds = p[j] * (dp[j] - inner) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let krow = (b * seq + j) * d + col;
                    for c in 0..dh {
                        dq[qrow + c] += ds * kd[krow + c];
                        dk[krow + c] += ds * qd[qrow + c];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Attention of one new query row per batch element over `keys.len()`
/// cached positions. `keys[j]` and `values[j]` are `[batch, d]`.
pub(crate) fn attend_step_forward(q: &Tensor, keys: &[&Tensor], values: &[&Tensor], heads: usize) -> (Tensor, Vec<f64>) {
    let (batch, d) = (q.rows(), q.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let len = keys.len();
    let mut probs = vec![0.0; batch * heads * len];
    let mut out = vec![0.0; batch * d];
    let mut scores = Vec::with_capacity(len);
    for b in 0..batch {
        for h in 0..heads {
            let col = b * d + h * dh;
            let qi = &q.data()[col..col + dh];
            scores.clear();
            for kj in keys {
                scores.push(dot(qi, &kj.data()[col..col + dh]) * scale);
            }
            softmax_in_place(&mut scores);
            let pbase = (b * heads + h) * len;
            probs[pbase..pbase + len].copy_from_slice(&scores);
            for (j, p) in scores.iter().enumerate() {
                let vj = &values[j].data()[col..col + dh];
                for c in 0..dh {
                    out[col + c] += p * vj[c];
                }
            }
        }
    }
    (Tensor::from_raw(vec![batch, d], out), probs)
}

/// Backward of [`attend_step_forward`]: `(dq, dkeys, dvalues)`.
pub(crate) fn attend_step_backward(
    dout: &Tensor,
    q: &Tensor,
    keys: &[&Tensor],
    values: &[&Tensor],
    probs: &[f64],
    heads: usize,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (batch, d) = (q.rows(), q.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let len = keys.len();
    let mut dq = vec![0.0; batch * d];
    let mut dk = vec![vec![0.0; batch * d]; len];
    let mut dv = vec![vec![0.0; batch * d]; len];
    let mut dp = Vec::with_capacity(len);
    for b in 0..batch {
        for h in 0..heads {
            let col = b * d + h * dh;
            let go = &dout.data()[col..col + dh];
            let qi = &q.data()[col..col + dh];
            let p = &probs[(b * heads + h) * len..(b * heads + h + 1) * len];
            dp.clear();
            for j in 0..len {
                dp.push(dot(go, &values[j].data()[col..col + dh]));
                for c in 0..dh {
                    dv[j][col + c] += p[j] * go[c];
                }
            }
            let inner: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for j in 0..len {
                let ds = p[j] * (dp[j] - inner) * scale;
                let kj = &keys[j].data()[col..col + dh];
                for c in 0..dh {
                    dq[col + c] += ds * kj[c];
                    dk[j][col + c] += ds * qi[c];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Mean over in-neighbors: `out[dst] = mean_{(src,dst)} x[src]`, zero rows
/// for nodes without in-edges.
pub(crate) fn mean_aggregate(x: &Tensor, edges: &[(usize, usize)], n_dst: usize) -> (Tensor, Vec<usize>) {
    let d = x.cols();
    let mut out = vec![0.0; n_dst * d];
    let mut deg = vec![0usize; n_dst];
    for &(s, t) in edges {
        deg[t] += 1;
        let src = x.row_slice(s);
        for c in 0..d {
            out[t * d + c] += src[c];
        }
    }
    for t in 0..n_dst {
        if deg[t] > 1 {
            let inv = 1.0 / deg[t] as f64;
            out[t * d..(t + 1) * d].iter_mut().for_each(|v| *v *= inv);
        }
    }
    (Tensor::from_raw(vec![n_dst, d], out), deg)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
