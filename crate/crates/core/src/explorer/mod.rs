//! Deformation-seeking exploration and the contact-filtered pretraining
//! corpus built from it.

mod shard;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use shard::{decode as decode_shard, encode as encode_shard};

use crate::error::{Error, Result};
use crate::graph::{shift_dataset, GraphEncoder, LatentState, ShiftedSample};
use crate::policy::{plan_trajectory, Agent, AgentConfig, Batch, Features, LqtConfig, ReplayBuffer, Transition};
use crate::sim::{
    check_pairing, compute_metrics, DoughEnv, ParticleSystem, RewardWeights, Shape, SimConfig, TargetState, Task, ToolKind, ToolPose,
};
use crate::skeleton::{extract_skeleton, SkeletonGraph};

/// Interaction counts of the full-scale corpus per (tool, shape) pair.
pub const FULL_SCALE_COUNTS: [(ToolKind, Shape, usize); 8] = [
    (ToolKind::RollingPin, Shape::Ball, 11398),
    (ToolKind::RollingPin, Shape::Cuboid, 7937),
    (ToolKind::Knife, Shape::Ball, 8973),
    (ToolKind::Knife, Shape::Cuboid, 5072),
    (ToolKind::RollingBall, Shape::Ball, 8083),
    (ToolKind::RollingBall, Shape::Cuboid, 8923),
    (ToolKind::DualFlats, Shape::TwoBalls, 2980),
    (ToolKind::DualFlats, Shape::Random, 4000),
];

/// Desk-scale reduction of [`FULL_SCALE_COUNTS`].
pub const DESK_SCALE_DIVISOR: usize = 50;

/// How the explorer picks poses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorerPolicy {
    /// Soft actor-critic on the exploration reward.
    Sac,
    /// Uniform unit actions, the baseline.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub tool: ToolKind,
    pub shape: Shape,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationConfig {
    pub pairs: Vec<PairConfig>,
    pub steps_per_episode: usize,
    pub seed: u64,
    pub skeleton_nodes: usize,
    pub policy: ExplorerPolicy,
    pub agent: AgentConfig,
    /// Environment steps between SAC update events.
    pub update_every: usize,
    pub updates_per_event: usize,
    pub sim: SimConfig,
    pub weights: RewardWeights,
    pub lqt: LqtConfig,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        let steps = 10;
        Self {
            pairs: Self::desk_scale_pairs(steps),
            steps_per_episode: steps,
            seed: 0,
            skeleton_nodes: 30,
            policy: ExplorerPolicy::Sac,
            agent: AgentConfig { hidden: 64, batch: 64, buffer_capacity: 20_000, ..AgentConfig::default() },
            update_every: 50,
            updates_per_event: 20,
            sim: SimConfig::default(),
            weights: RewardWeights::default(),
            lqt: LqtConfig::default(),
        }
    }
}

impl ExplorationConfig {
    /// Episodes per pair so each pair records about `count / 50` transitions.
    pub fn desk_scale_pairs(steps_per_episode: usize) -> Vec<PairConfig> {
        FULL_SCALE_COUNTS
            .iter()
            .map(|&(tool, shape, count)| PairConfig {
                tool,
                shape,
                episodes: (count / DESK_SCALE_DIVISOR).div_ceil(steps_per_episode.max(1)),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            check_pairing(Task::for_tool(p.tool), p.shape)?;
        }
        if self.skeleton_nodes == 0 || self.update_every == 0 {
            return Err(Error::Config("skeleton_nodes and update_every must be positive".into()));
        }
        self.agent.validate()?;
        self.sim.validate()
    }

    /// Environment seed of episode `k` of pair `pair`.
    pub fn episode_seed(&self, pair: usize, k: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(((pair as u64) << 32) | k as u64)
    }
}

/// How far `state` has been pushed from the shape it started in:
/// `w_iou − reward(state, initial)`. The offset `w_iou` is the reward of an
/// unchanged state, so no deformation scores exactly zero and any
/// deformation scores at least zero.
pub fn exploration_reward(state: &ParticleSystem, initial: &TargetState, weights: &RewardWeights) -> Result<f64> {
    Ok(weights.iou - compute_metrics(state, initial, weights)?.reward)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub tool: ToolKind,
    pub shape: Shape,
    pub seed: u64,
    pub skeleton_nodes: usize,
}

/// One recorded state. Values are rounded through `f32` when recorded, so
/// a trajectory reads back from disk exactly as it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub skeleton: SkeletonGraph,
    pub pose: ToolPose,
    /// Whether the tool touched the dough on the way into this state.
    pub contact: bool,
    /// Exploration reward of this state.
    pub reward: f64,
}

impl StepRecord {
    fn new(skeleton: &SkeletonGraph, pose: &ToolPose, contact: bool, reward: f64) -> Self {
        Self { skeleton: skeleton.quantized(), pose: pose.quantized(), contact, reward: reward as f32 as f64 }
    }
}

/// The initial state plus one record per step; empty when no steps ran.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Transitions kept by the contact filter: contact at either end.
    pub fn kept(&self) -> Vec<bool> {
        self.steps.windows(2).map(|w| w[0].contact || w[1].contact).collect()
    }

    /// Shifted samples over maximal runs of kept transitions.
    pub fn sequences(&self) -> Result<Vec<Vec<ShiftedSample>>> {
        let kept = self.kept();
        let mut out = Vec::new();
        let mut i = 0;
        while i < kept.len() {
            if !kept[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < kept.len() && kept[i] {
                i += 1;
            }
            // Transitions start..i cover states start..=i.
            let states: Vec<(SkeletonGraph, ToolPose)> = self.steps[start..=i].iter().map(|s| (s.skeleton.clone(), s.pose)).collect();
            out.push(shift_dataset(&states)?);
        }
        Ok(out)
    }
}

/// A pose chooser for one tool plus its learning state.
pub struct Explorer {
    pub kind: ToolKind,
    /// `None` for the random baseline.
    pub agent: Option<Agent>,
    encoder: GraphEncoder,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: usize,
    update_every: usize,
    updates_per_event: usize,
}

impl Explorer {
    /// The SAC explorer sees shapes through a fixed random encoder, since no
    /// trained encoder exists before the corpus does.
    pub fn new(kind: ToolKind, policy: ExplorerPolicy, cfg: &ExplorationConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = GraphEncoder::new(&mut rng);
        let agent = match policy {
            ExplorerPolicy::Sac => Some(Agent::new(kind, cfg.agent, &mut rng)?),
            ExplorerPolicy::Random => None,
        };
        Ok(Self {
            kind,
            agent,
            encoder,
            buffer: ReplayBuffer::new(cfg.agent.buffer_capacity)?,
            rng,
            env_steps: 0,
            update_every: cfg.update_every,
            updates_per_event: cfg.updates_per_event,
        })
    }

    fn choose(&mut self, eps: &LatentState, goal: &LatentState, deterministic: bool) -> Result<Vec<f64>> {
        match &self.agent {
            Some(a) => Ok(a.act(eps, goal, deterministic, &mut self.rng)?.1),
            None => Ok((0..self.kind.action_dim()).map(|_| self.rng.random_range(-1.0..1.0)).collect()),
        }
    }

    fn update(&mut self, batch_size: usize) -> Result<()> {
        let Some(agent) = self.agent.as_mut() else { return Ok(()) };
        for _ in 0..self.updates_per_event {
            let items = self.buffer.sample(batch_size, &mut self.rng)?;
            let batch = Batch::new(&items)?;
            agent.update_critics(&batch, None, Features::default(), &mut self.rng)?;
            agent.update_actor(&batch, None, Features::default(), &mut self.rng)?;
        }
        Ok(())
    }

    /// Runs `steps` poses on `env`, learning on the way unless `deterministic`.
    pub fn explore_episode(
        &mut self,
        env: &mut DoughEnv,
        steps: usize,
        seed: u64,
        cfg: &ExplorationConfig,
        deterministic: bool,
    ) -> Result<Trajectory> {
        if env.tool.kind != self.kind {
            return Err(Error::Config(format!("explorer drives a {}, environment has a {}", self.kind, env.tool.kind)));
        }
        let header = TrajectoryHeader { tool: self.kind, shape: env.shape, seed, skeleton_nodes: cfg.skeleton_nodes };
        if steps == 0 {
            return Ok(Trajectory { header, steps: Vec::new() });
        }
        let (kind, shape) = (self.kind, env.shape);
        let context = |e: Error, step: usize| match e {
            Error::Simulation { .. } => e,
            other => Error::Simulation { step, reason: format!("{kind} x {shape} seed {seed}: {other}") },
        };
        let initial = TargetState::from_points(env.state.positions.clone(), env.state.particle_volume, env.config.grid_resolution)?;
        let mut skeleton = extract_skeleton(&env.surface()?, cfg.skeleton_nodes)?;
        let mut eps = self.encoder.embed_objects(&[&skeleton])?[0];
        // The starting shape doubles as the goal the explorer moves away from.
        let goal = eps;
        let mut last = exploration_reward(&env.state, &initial, &env.weights)?;
        let mut records = vec![StepRecord::new(&skeleton, &env.pose, false, last)];
        let mut segment: Option<Vec<ToolPose>> = None;
        for t in 0..steps {
            let mut step = || -> Result<_> {
                let unit = self.choose(&eps, &goal, deterministic)?;
                let target = env.tool.pose_from_unit(&unit);
                let pose = env.pose;
                let waypoints: Vec<ToolPose> =
                    plan_trajectory(&pose, &target, segment.as_deref(), &cfg.lqt).iter().map(|w| env.tool.clamp(w)).collect();
                let contact = env.step(&waypoints)?;
                let next = extract_skeleton(&env.surface()?, cfg.skeleton_nodes)?;
                let eps_next = self.encoder.embed_objects(&[&next])?[0];
                let reward = exploration_reward(&env.state, &initial, &env.weights)?;
                Ok((unit, pose, waypoints, contact, next, eps_next, reward))
            };
            let (unit, pose, waypoints, contact, next, eps_next, reward) = step().map_err(|e| context(e, t))?;
            records.push(StepRecord::new(&next, &env.pose, contact, reward));
            if !deterministic && self.agent.is_some() {
                self.buffer.push(Transition {
                    eps,
                    goal,
                    action: unit,
                    reward: reward - last,
                    eps_next,
                    done: t + 1 == steps,
                    skeleton: std::mem::replace(&mut skeleton, next.clone()),
                    skeleton_next: next,
                    pose,
                    pose_next: env.pose,
                });
                self.env_steps += 1;
                if self.env_steps.is_multiple_of(self.update_every) {
                    self.update(cfg.agent.batch).map_err(|e| context(e, t))?;
                }
            } else {
                skeleton = next;
            }
            segment = Some(waypoints);
            eps = eps_next;
            last = reward;
        }
        Ok(Trajectory { header, steps: records })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub tool: ToolKind,
    pub shape: Shape,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Recorded transitions.
    pub total: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub seed: u64,
    pub skeleton_nodes: usize,
    pub steps_per_episode: usize,
    pub policy: ExplorerPolicy,
    pub pairs: Vec<PairStats>,
    /// Shard file names relative to the dataset directory.
    pub shards: Vec<String>,
    pub warnings: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "softworld-trajectories-v1";

/// Explores every configured pair and writes one shard per episode plus
/// the manifest under `out`.
pub fn generate_dataset(cfg: &ExplorationConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut pairs = Vec::new();
    let mut shards = Vec::new();
    let mut warnings = Vec::new();
    for (pi, pair) in cfg.pairs.iter().enumerate() {
        let task = Task::for_tool(pair.tool);
        let mut explorer = Explorer::new(pair.tool, cfg.policy, cfg, cfg.episode_seed(pi, usize::MAX))?;
        let mut stats =
            PairStats { tool: pair.tool, shape: pair.shape, episodes: pair.episodes, seeds: Vec::new(), total: 0, kept: 0, dropped: 0 };
        for k in 0..pair.episodes {
            let seed = cfg.episode_seed(pi, k);
            let mut env = DoughEnv::new(task, pair.shape, seed, cfg.sim.clone(), cfg.weights)?;
            let traj = explorer.explore_episode(&mut env, cfg.steps_per_episode, seed, cfg, false)?;
            let kept = traj.kept();
            stats.total += kept.len();
            stats.kept += kept.iter().filter(|&&k| k).count();
            stats.seeds.push(seed);
            let name = format!("{:02}_{}_{}_{k:05}.bin", pi, pair.tool, pair.shape);
            shard::write(&out.join(&name), &traj)?;
            shards.push(name);
        }
        stats.dropped = stats.total - stats.kept;
        log::info!("{} x {}: kept {} of {} transitions", pair.tool, pair.shape, stats.kept, stats.total);
        if stats.kept == 0 {
            warnings.push(format!("{} x {}: no transition touched the dough", pair.tool, pair.shape));
        }
        pairs.push(stats);
    }
    let manifest = DatasetManifest {
        format: FORMAT.into(),
        seed: cfg.seed,
        skeleton_nodes: cfg.skeleton_nodes,
        steps_per_episode: cfg.steps_per_episode,
        policy: cfg.policy,
        pairs,
        shards,
        warnings,
    };
    let path = out.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A generated corpus read back from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
        if manifest.format != FORMAT {
            return Err(Error::Config(format!("unsupported dataset format `{}`", manifest.format)));
        }
        let trajectories = manifest.shards.iter().map(|s| shard::read(&dir.join(s))).collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, trajectories })
    }

    pub fn kept_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.kept().iter().filter(|&&k| k).count()).sum()
    }

    /// Contact-filtered shifted sequences, optionally for one tool only.
    pub fn sequences(&self, tool: Option<ToolKind>) -> Result<Vec<Vec<ShiftedSample>>> {
        let mut out = Vec::new();
        for t in self.trajectories.iter().filter(|t| tool.is_none_or(|k| t.header.tool == k)) {
            out.extend(t.sequences()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
