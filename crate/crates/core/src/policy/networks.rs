//! Actor, critic and latent reward networks over `(ε, E(g))` inputs.

use rand::Rng;

use crate::error::Result;
use crate::graph::EMBED_DIM;
use crate::tensor::nn::{Init, Linear, Mlp};
use crate::tensor::{ParamStore, Tape, Tensor, Var};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps `log(1 − tanh²)` finite at saturation.
const SQUASH_EPS: f64 = 1e-6;

/// Single-node version of a scene-stage layer: `tanh(ε·W + b)`.
#[derive(Clone, Debug)]
struct Preprocess(Linear);

impl Preprocess {
    fn new(store: &mut ParamStore, name: &str, rng: &mut impl Rng) -> Self {
        Self(Linear::new(store, name, EMBED_DIM, EMBED_DIM, Init::FanIn, rng))
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, eps: Var) -> Result<Var> {
        let h = self.0.forward(tape, store, eps)?;
        Ok(tape.tanh(h))
    }
}

/// Squashed Gaussian policy over unit actions in `(-1, 1)^d`.
#[derive(Clone, Debug)]
pub struct Actor {
    pub store: ParamStore,
    pub action_dim: usize,
    pre: Preprocess,
    mlp: Mlp,
}

/// Actions and their log-densities, both on the tape.
pub struct ActionSample {
    /// `[b, d]` unit actions.
    pub action: Var,
    /// `[b, 1]`.
    pub log_prob: Var,
}

impl Actor {
    pub fn new(action_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let pre = Preprocess::new(&mut store, "actor.pre", rng);
        let mlp = Mlp::new(&mut store, "actor.mlp", &[2 * EMBED_DIM, hidden, hidden, 2 * action_dim], rng);
        Self { store, action_dim, pre, mlp }
    }

    /// Mean and log standard deviation of the pre-squash Gaussian.
    pub fn distribution(&self, tape: &mut Tape, eps: Var, goal: Var) -> Result<(Var, Var)> {
        let h = self.pre.forward(tape, &self.store, eps)?;
        let x = tape.concat_cols(&[h, goal])?;
        let out = self.mlp.forward(tape, &self.store, x)?;
        let mean = tape.slice_cols(out, 0, self.action_dim)?;
        let raw = tape.slice_cols(out, self.action_dim, self.action_dim)?;
        let t = tape.tanh(raw);
        let t = tape.offset(t, 1.0);
        let t = tape.scale(t, 0.5 * (LOG_STD_MAX - LOG_STD_MIN));
        let log_std = tape.offset(t, LOG_STD_MIN);
        Ok((mean, log_std))
    }

    /// Reparameterized sample with standard-normal `noise` (`[b, d]`), or
    /// the mode `tanh(mean)` when `noise` is `None`.
    pub fn sample(&self, tape: &mut Tape, eps: Var, goal: Var, noise: Option<&Tensor>) -> Result<ActionSample> {
        let (mean, log_std) = self.distribution(tape, eps, goal)?;
        let b = tape.value(mean).rows();
        let xi = noise.cloned().unwrap_or_else(|| Tensor::zeros(&[b, self.action_dim]));
        let base: f64 = -0.5 * (2.0 * std::f64::consts::PI).ln();
        let gauss: Vec<f64> = (0..b).map(|r| xi.row_slice(r).iter().map(|z| base - 0.5 * z * z).sum()).collect();
        let xi = tape.constant(xi);
        let std = tape.exp(log_std);
        let spread = tape.mul(std, xi)?;
        let u = tape.add(mean, spread)?;
        let action = tape.tanh(u);

        let a2 = tape.square(action);
        let one_minus = tape.neg(a2);
        let one_minus = tape.offset(one_minus, 1.0 + SQUASH_EPS);
        let log_jac = tape.log(one_minus);
        let per = tape.add(log_std, log_jac)?;
        let per = tape.row_sum(per);
        let per = tape.neg(per);
        let gauss = tape.constant(Tensor::new(&[b, 1], gauss)?);
        let log_prob = tape.add(per, gauss)?;
        Ok(ActionSample { action, log_prob })
    }
}

/// `Q(ε, E(g), a) → [b, 1]`.
#[derive(Clone, Debug)]
pub struct Critic {
    pub store: ParamStore,
    pre: Preprocess,
    mlp: Mlp,
}

impl Critic {
    pub fn new(name: &str, action_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let pre = Preprocess::new(&mut store, &format!("{name}.pre"), rng);
        let mlp = Mlp::new(&mut store, &format!("{name}.mlp"), &[2 * EMBED_DIM + action_dim, hidden, hidden, 1], rng);
        Self { store, pre, mlp }
    }

    pub fn forward(&self, tape: &mut Tape, eps: Var, goal: Var, action: Var) -> Result<Var> {
        let h = self.pre.forward(tape, &self.store, eps)?;
        let x = tape.concat_cols(&[h, goal, action])?;
        self.mlp.forward(tape, &self.store, x)
    }
}

/// Latent reward model `η(ε | E(g)) → [b, 1]`.
#[derive(Clone, Debug)]
pub struct RewardModel {
    pub store: ParamStore,
    mlp: Mlp,
}

impl RewardModel {
    pub fn new(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "eta.mlp", &[2 * EMBED_DIM, hidden, hidden, 1], rng);
        Self { store, mlp }
    }

    pub fn forward(&self, tape: &mut Tape, eps: Var, goal: Var) -> Result<Var> {
        let x = tape.concat_cols(&[eps, goal])?;
        self.mlp.forward(tape, &self.store, x)
    }
}

/// Pose coordinates `lo + (a + 1)/2·(hi − lo)` from unit actions on the tape.
pub fn unit_to_pose(tape: &mut Tape, bounds: &[(f64, f64)], action: Var) -> Result<Var> {
    let d = bounds.len();
    let mut diag = Tensor::zeros(&[d, d]);
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        diag.data_mut()[i * d + i] = 0.5 * (hi - lo);
    }
    let mid: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let w = tape.constant(diag);
    let b = tape.constant(Tensor::new(&[d], mid)?);
    tape.affine(action, w, b)
}
