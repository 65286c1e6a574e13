//! Goal-conditioned soft actor-critic with optional latent reward model and
//! imagined ("thinking") rollouts through SoftGPT.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::networks::{unit_to_pose, Actor, Critic, RewardModel};
use super::replay::Batch;
use super::returns::q_lambda_coefficients;
use crate::dynamics::{Rollout, SoftGpt, Token};
use crate::error::{Error, Result};
use crate::graph::{manip_nodes, GraphEncoder, LatentState};
use crate::sim::{ToolKind, ToolPose, ToolSpec};
use crate::tensor::{load_checkpoint, save_checkpoint, AdamConfig, AdamState, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThinkConfig {
    /// Imagined steps per estimate.
    pub horizon: usize,
    /// Mix between the direct critic value and the imagined returns.
    pub lambda: f64,
    pub gamma: f64,
    /// Entropy coefficient.
    pub alpha: f64,
}

impl Default for ThinkConfig {
    fn default() -> Self {
        Self { horizon: 5, lambda: 0.9, gamma: 0.99, alpha: 0.2 }
    }
}

impl ThinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("thinking horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha {} must be non-negative", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Polyak coefficient for the target critics.
    pub tau: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub think: ThinkConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { hidden: 256, learning_rate: 3e-4, tau: 0.005, batch: 128, buffer_capacity: 100_000, think: ThinkConfig::default() }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.think.validate()?;
        if self.hidden == 0 || self.batch == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config("hidden width, batch and buffer capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        Ok(())
    }
}

/// Which optional components take part in the value estimates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Features {
    pub thinking: bool,
    pub latent_reward: bool,
}

/// The learned world model used for imagination.
#[derive(Clone, Copy)]
pub struct World<'a> {
    pub gpt: &'a SoftGpt,
    pub encoder: &'a GraphEncoder,
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub kind: ToolKind,
    pub spec: ToolSpec,
    pub config: AgentConfig,
    pub actor: Actor,
    pub critics: [Critic; 2],
    pub targets: [Critic; 2],
    pub eta: RewardModel,
    actor_opt: AdamState,
    critic_opt: [AdamState; 2],
    eta_opt: AdamState,
}

#[derive(Serialize, Deserialize)]
struct AgentMeta {
    kind: ToolKind,
    config: AgentConfig,
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).expect("finite noise")
}

fn column(v: &[f64]) -> Result<Tensor> {
    Tensor::new(&[v.len(), 1], v.to_vec())
}

impl Agent {
    pub fn new(kind: ToolKind, config: AgentConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = kind.action_dim();
        let actor = Actor::new(d, config.hidden, rng);
        let critics = [Critic::new("q1", d, config.hidden, rng), Critic::new("q2", d, config.hidden, rng)];
        let targets = critics.clone();
        let eta = RewardModel::new(config.hidden, rng);
        let adam = AdamConfig::with_lr(config.learning_rate);
        Ok(Self {
            kind,
            spec: ToolSpec::standard(kind),
            actor_opt: AdamState::new(&actor.store, adam),
            critic_opt: [AdamState::new(&critics[0].store, adam), AdamState::new(&critics[1].store, adam)],
            eta_opt: AdamState::new(&eta.store, adam),
            config,
            actor,
            critics,
            targets,
            eta,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.kind.action_dim()
    }

    /// Pose for `eps` and the unit action behind it; deterministic mode
    /// returns the squashed mean.
    pub fn act(&self, eps: &LatentState, goal: &LatentState, deterministic: bool, rng: &mut impl Rng) -> Result<(ToolPose, Vec<f64>)> {
        let noise = (!deterministic).then(|| standard_normal(1, self.action_dim(), rng));
        let mut tape = Tape::new();
        let e = tape.constant(eps.to_tensor());
        let g = tape.constant(goal.to_tensor());
        let s = self.actor.sample(&mut tape, e, g, noise.as_ref())?;
        let unit = tape.value(s.action).data().to_vec();
        Ok((self.spec.pose_from_unit(&unit), unit))
    }

    /// Imagined continuation from `eps` with the deterministic actor.
    pub fn think(&self, world: World<'_>, eps: &LatentState, goal: &LatentState, history: &[Token]) -> Result<Rollout> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        world.gpt.rollout(world.encoder, history, *eps, self.config.think.horizon, |e| Ok(self.act(e, goal, true, &mut unused)?.0))
    }

    /// Imagined `(ε̃_N, π(ε̃_N))` for N = 1..H after taking `action` at `eps`.
    fn imagine(&self, tape: &mut Tape, world: World<'_>, eps: Var, goal: Var, action: Var) -> Result<Vec<(Var, Var)>> {
        let mut state = world.gpt.start();
        let (mut cur, mut a) = (eps, action);
        let mut out = Vec::with_capacity(self.config.think.horizon);
        for _ in 0..self.config.think.horizon {
            let pose = unit_to_pose(tape, &self.spec.bounds, a)?;
            let (nodes, seg) = manip_nodes(tape, self.kind, pose)?;
            let token = world.encoder.encode_with_predicted_nodes(tape, cur, nodes, &seg)?;
            let next = world.gpt.forward_step(tape, token, cur, &mut state)?;
            let next_a = self.actor.sample(tape, next, goal, None)?.action;
            out.push((next, next_a));
            cur = next;
            a = next_a;
        }
        Ok(out)
    }

    /// `Q̃_i(ε, a)` for both critics in `critics`; the plain values when
    /// thinking is off or `λ = 0`.
    pub fn q_tilde_tape(
        &self,
        tape: &mut Tape,
        critics: [&Critic; 2],
        world: Option<World<'_>>,
        features: Features,
        eps: Var,
        goal: Var,
        action: Var,
    ) -> Result<[Var; 2]> {
        let direct = [critics[0].forward(tape, eps, goal, action)?, critics[1].forward(tape, eps, goal, action)?];
        let ThinkConfig { horizon, lambda, gamma, .. } = self.config.think;
        let world = match world {
            Some(w) if features.thinking && lambda > 0.0 => w,
            _ => return Ok(direct),
        };
        let imagined = self.imagine(tape, world, eps, goal, action)?;
        let (c_eta, c_q) = q_lambda_coefficients(horizon, lambda, gamma);
        let mut reward_part = None;
        if features.latent_reward {
            for (k, &(s, _)) in imagined.iter().enumerate().take(horizon - 1) {
                let eta = self.eta.forward(tape, s, goal)?;
                let term = tape.scale(eta, c_eta[k]);
                reward_part = Some(match reward_part {
                    Some(acc) => tape.add(acc, term)?,
                    None => term,
                });
            }
        }
        let mut out = direct;
        for (i, critic) in critics.iter().enumerate() {
            let mut acc = reward_part;
            for (n, &(s, a)) in imagined.iter().enumerate() {
                let q = critic.forward(tape, s, goal, a)?;
                let term = tape.scale(q, c_q[n]);
                acc = Some(match acc {
                    Some(x) => tape.add(x, term)?,
                    None => term,
                });
            }
            let q_lambda = acc.expect("horizon is at least 1");
            let near = tape.scale(direct[i], 1.0 - lambda);
            let far = tape.scale(q_lambda, lambda);
            out[i] = tape.add(near, far)?;
        }
        Ok(out)
    }

    /// TD targets `r + η(ε') + γ(1 − d)·[min_i Q̃_targ,i(ε', ã') − α·log π(ã'|ε')]`
    /// with `ã'` drawn from `noise`.
    pub fn critic_targets(&self, batch: &Batch, world: Option<World<'_>>, features: Features, noise: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let e = tape.constant(batch.eps_next.clone());
        let g = tape.constant(batch.goal.clone());
        let s = self.actor.sample(&mut tape, e, g, Some(noise))?;
        let q = self.q_tilde_tape(&mut tape, [&self.targets[0], &self.targets[1]], world, features, e, g, s.action)?;
        let eta = if features.latent_reward {
            let v = self.eta.forward(&mut tape, e, g)?;
            tape.value(v).data().to_vec()
        } else {
            vec![0.0; batch.len()]
        };
        let (q1, q2, logp) = (tape.value(q[0]).data(), tape.value(q[1]).data(), tape.value(s.log_prob).data());
        let ThinkConfig { gamma, alpha, .. } = self.config.think;
        Ok((0..batch.len())
            .map(|j| {
                let immediate = batch.reward[j] + eta[j];
                if batch.done[j] {
                    immediate
                } else {
                    immediate + gamma * (q1[j].min(q2[j]) - alpha * logp[j])
                }
            })
            .collect())
    }

    /// Sum of both critics' mean squared errors to `targets`.
    pub fn critic_loss(&self, tape: &mut Tape, batch: &Batch, targets: &[f64]) -> Result<Var> {
        let e = tape.constant(batch.eps.clone());
        let g = tape.constant(batch.goal.clone());
        let a = tape.constant(batch.action.clone());
        let y = tape.constant(column(targets)?);
        let mut total = None;
        for c in &self.critics {
            let q = c.forward(tape, e, g, a)?;
            let d = tape.sub(q, y)?;
            let sq = tape.square(d);
            let m = tape.mean(sq);
            total = Some(match total {
                Some(t) => tape.add(t, m)?,
                None => m,
            });
        }
        Ok(total.expect("two critics"))
    }

    /// `mean[−min_i Q̃_i(ε, ã_θ) − η(ε) + α·log π(ã_θ|ε)]` with `ã_θ` from `noise`.
    pub fn actor_loss(&self, tape: &mut Tape, batch: &Batch, world: Option<World<'_>>, features: Features, noise: &Tensor) -> Result<Var> {
        let e = tape.constant(batch.eps.clone());
        let g = tape.constant(batch.goal.clone());
        let s = self.actor.sample(tape, e, g, Some(noise))?;
        let q = self.q_tilde_tape(tape, [&self.critics[0], &self.critics[1]], world, features, e, g, s.action)?;
        let m = tape.min(q[0], q[1])?;
        let value = tape.neg(m);
        let entropy = tape.scale(s.log_prob, self.config.think.alpha);
        let mut per = tape.add(value, entropy)?;
        if features.latent_reward {
            let eta = self.eta.forward(tape, e, g)?;
            per = tape.sub(per, eta)?;
        }
        Ok(tape.mean(per))
    }

    pub fn reward_loss(&self, tape: &mut Tape, batch: &Batch) -> Result<Var> {
        let e = tape.constant(batch.eps.clone());
        let g = tape.constant(batch.goal.clone());
        let r = tape.constant(column(&batch.reward)?);
        let eta = self.eta.forward(tape, e, g)?;
        let d = tape.sub(eta, r)?;
        let sq = tape.square(d);
        Ok(tape.mean(sq))
    }

    pub fn update_critics(&mut self, batch: &Batch, world: Option<World<'_>>, features: Features, rng: &mut impl Rng) -> Result<f64> {
        let noise = standard_normal(batch.len(), self.action_dim(), rng);
        let targets = self.critic_targets(batch, world, features, &noise)?;
        let mut tape = Tape::new();
        let loss = self.critic_loss(&mut tape, batch, &targets)?;
        let value = finite(tape.value(loss).item(), "critic loss")?;
        let grads = tape.backward(loss)?;
        for i in 0..2 {
            let store = &mut self.critics[i].store;
            store.zero_grad();
            store.accumulate(&tape, &grads);
            self.critic_opt[i].step(store)?;
            self.targets[i].store.polyak_from(&self.critics[i].store, self.config.tau)?;
        }
        Ok(value)
    }

    pub fn update_actor(&mut self, batch: &Batch, world: Option<World<'_>>, features: Features, rng: &mut impl Rng) -> Result<f64> {
        let noise = standard_normal(batch.len(), self.action_dim(), rng);
        let mut tape = Tape::new();
        let loss = self.actor_loss(&mut tape, batch, world, features, &noise)?;
        let value = finite(tape.value(loss).item(), "actor loss")?;
        let grads = tape.backward(loss)?;
        self.actor.store.zero_grad();
        self.actor.store.accumulate(&tape, &grads);
        self.actor_opt.step(&mut self.actor.store)?;
        Ok(value)
    }

    pub fn update_reward_model(&mut self, batch: &Batch) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.reward_loss(&mut tape, batch)?;
        let value = finite(tape.value(loss).item(), "reward model loss")?;
        let grads = tape.backward(loss)?;
        self.eta.store.zero_grad();
        self.eta.store.accumulate(&tape, &grads);
        self.eta_opt.step(&mut self.eta.store)?;
        Ok(value)
    }

    fn stores(&self) -> [(&'static str, &ParamStore); 6] {
        [
            ("actor", &self.actor.store),
            ("critic1", &self.critics[0].store),
            ("critic2", &self.critics[1].store),
            ("critic1_target", &self.targets[0].store),
            ("critic2_target", &self.targets[1].store),
            ("eta", &self.eta.store),
        ]
    }

    /// One checkpoint per component plus `agent.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, store) in self.stores() {
            save_checkpoint(store, &dir.join(format!("{name}.ckpt")))?;
        }
        let meta = dir.join("agent.json");
        let json = serde_json::to_vec_pretty(&AgentMeta { kind: self.kind, config: self.config })?;
        fs::write(&meta, json).map_err(|e| Error::io(&meta, e))
    }

    /// Restores weights; optimizer moments start fresh.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("agent.json");
        let bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: AgentMeta = serde_json::from_slice(&bytes)?;
        let mut agent = Self::new(meta.kind, meta.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        let Agent { actor, critics, targets, eta, .. } = &mut agent;
        let [c1, c2] = critics;
        let [t1, t2] = targets;
        for (name, store) in [
            ("actor", &mut actor.store),
            ("critic1", &mut c1.store),
            ("critic2", &mut c2.store),
            ("critic1_target", &mut t1.store),
            ("critic2_target", &mut t2.store),
            ("eta", &mut eta.store),
        ] {
            load_checkpoint(store, &dir.join(format!("{name}.ckpt")))?;
        }
        Ok(agent)
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Training { param: what.into(), reason: "non-finite loss".into() })
    }
}
