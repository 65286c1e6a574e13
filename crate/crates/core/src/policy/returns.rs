//! λ-mixed value estimates over imagined rollouts.
//!
//! With imagined embeddings `ε̃_1..ε̃_H`, latent rewards `η_k = η(ε̃_k)` and
//! bootstraps `Q_N = Q(ε̃_N, π(ε̃_N))`, the N-step return is
//! `G_N = Σ_{k<N} γ^{k−1}·η_k + γ^{N−1}·Q_N` and `Q^λ` is the
//! `λ^{N−1}`-weighted mean of `G_1..G_H`.

use crate::error::{Error, Result};

/// `Q^λ` straight from its definition.
pub fn q_lambda(etas: &[f64], qs: &[f64], lambda: f64, gamma: f64) -> Result<f64> {
    if qs.is_empty() || etas.len() != qs.len() {
        return Err(Error::Usage(format!("rollout with {} rewards and {} values", etas.len(), qs.len())));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for n in 1..=qs.len() {
        let g: f64 = (1..n).map(|k| gamma.powi(k as i32 - 1) * etas[k - 1]).sum::<f64>() + gamma.powi(n as i32 - 1) * qs[n - 1];
        let w = lambda.powi(n as i32 - 1);
        num += w * g;
        den += w;
    }
    Ok(num / den)
}

/// Linear coefficients `(c_η, c_Q)` with `Q^λ = Σ c_η[k]·η_k + Σ c_Q[n]·Q_n`,
/// for building the estimate from tape values.
pub fn q_lambda_coefficients(horizon: usize, lambda: f64, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let weights: Vec<f64> = (0..horizon).map(|n| lambda.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
    let c_q = (0..horizon).map(|n| w[n] * gamma.powi(n as i32)).collect();
    // η_k (k = 1-based) enters every G_N with N > k.
    let c_eta = (0..horizon).map(|k| gamma.powi(k as i32) * w[k + 1..].iter().sum::<f64>()).collect();
    (c_eta, c_q)
}

/// `(1 − λ)·q_direct + λ·Q^λ`; `λ = 0` returns `q_direct` without reading
/// the rollout.
pub fn q_tilde(q_direct: f64, etas: &[f64], qs: &[f64], lambda: f64, gamma: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(q_direct);
    }
    if qs.is_empty() {
        return Err(Error::Usage("λ > 0 needs an imagined rollout".into()));
    }
    Ok((1.0 - lambda) * q_direct + lambda * q_lambda(etas, qs, lambda, gamma)?)
}
