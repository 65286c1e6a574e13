//! Environment loop for the four agent variants: act, plan waypoints,
//! simulate, skeletonize, encode, store, and update on fixed step cadences.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, AgentConfig, Features, World};
use super::lqt::{plan_trajectory, LqtConfig};
use super::replay::{Batch, ReplayBuffer, Transition};
use crate::dynamics::{finetune, PretrainConfig, SoftGpt, SoftGptConfig};
use crate::error::{Error, Result};
use crate::graph::{shift_dataset, GraphEncoder, LatentState};
use crate::sim::{check_pairing, surface_points, DoughEnv, RewardWeights, Shape, SimConfig, Task, ToolPose};
use crate::skeleton::{extract_skeleton, SkeletonGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain SAC on the raw reward.
    Sac,
    /// Thinking through a SoftGPT trained from scratch in the loop.
    SoftgptS,
    /// As `SoftgptS`, plus the latent reward model.
    SoftgptSr,
    /// Thinking through a pretrained SoftGPT, plus the latent reward model.
    SoftgptFull,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sac, Variant::SoftgptS, Variant::SoftgptSr, Variant::SoftgptFull];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sac => "sac",
            Variant::SoftgptS => "softgpt_s",
            Variant::SoftgptSr => "softgpt_sr",
            Variant::SoftgptFull => "softgpt_full",
        }
    }

    pub fn features(self) -> Features {
        Features { thinking: self != Variant::Sac, latent_reward: matches!(self, Variant::SoftgptSr | Variant::SoftgptFull) }
    }

    pub fn uses_softgpt(self) -> bool {
        self != Variant::Sac
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: Task,
    pub shape: Shape,
    pub variant: Variant,
    pub seed: u64,
    pub episodes: usize,
    /// Policy steps (tool poses) per episode.
    pub steps_per_episode: usize,
    /// Environment steps between actor/critic/η update events.
    pub update_every: usize,
    /// Environment steps between SoftGPT update events.
    pub gpt_update_every: usize,
    /// Gradient steps per actor/critic/η event.
    pub updates_per_event: usize,
    /// Episodes of history a SoftGPT event trains on.
    pub gpt_recent_episodes: usize,
    pub skeleton_nodes: usize,
    pub agent: AgentConfig,
    pub softgpt: SoftGptConfig,
    /// Optimizer settings of the in-loop SoftGPT updates.
    pub finetune: PretrainConfig,
    pub sim: SimConfig,
    pub weights: RewardWeights,
    pub lqt: LqtConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Rolling,
            shape: Shape::Ball,
            variant: Variant::Sac,
            seed: 0,
            episodes: 200,
            steps_per_episode: 5,
            update_every: 250,
            gpt_update_every: 500,
            updates_per_event: 50,
            gpt_recent_episodes: 100,
            skeleton_nodes: 30,
            agent: AgentConfig::default(),
            softgpt: SoftGptConfig::default(),
            finetune: PretrainConfig { epochs: 2, batch: 16, ..PretrainConfig::default() },
            sim: SimConfig::default(),
            weights: RewardWeights::default(),
            lqt: LqtConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_pairing(self.task, self.shape).map_err(|e| Error::Config(e.to_string()))?;
        self.agent.validate()?;
        self.softgpt.validate()?;
        self.sim.validate()?;
        if self.steps_per_episode == 0 || self.update_every == 0 || self.gpt_update_every == 0 {
            return Err(Error::Config("episode length and update cadences must be positive".into()));
        }
        if self.skeleton_nodes == 0 {
            return Err(Error::Config("skeleton_nodes must be positive".into()));
        }
        if self.variant.uses_softgpt() && self.agent.think.horizon > self.softgpt.context {
            return Err(Error::Config(format!(
                "thinking horizon {} exceeds the SoftGPT context {}",
                self.agent.think.horizon, self.softgpt.context
            )));
        }
        Ok(())
    }

    /// Environment seed of episode `k`; evaluation episodes use a disjoint range.
    pub fn episode_seed(&self, k: usize, evaluation: bool) -> u64 {
        let base = self.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        if evaluation {
            base ^ (1 << 62)
        } else {
            base
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Actor, critics and (when enabled) η.
    Policy,
    SoftGpt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateEvent {
    /// Global environment step at which the event fired.
    pub step: usize,
    pub kind: EventKind,
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Global environment steps at the end of the episode.
    pub step: usize,
    /// Final shaped reward of the episode.
    pub reward: f64,
    pub iou: f64,
    pub sdf_score: f64,
    pub density_score: f64,
    pub task: Task,
    pub variant: Variant,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "episode,step,reward,iou,sdf_score,density_score,task,variant,seed";

impl EpisodeLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.episode, self.step, self.reward, self.iou, self.sdf_score, self.density_score, self.task, self.variant, self.seed
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = || Error::Config(format!("malformed metrics row `{line}`"));
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            episode: f[0].parse().map_err(|_| bad())?,
            step: f[1].parse().map_err(|_| bad())?,
            reward: num(f[2])?,
            iou: num(f[3])?,
            sdf_score: num(f[4])?,
            density_score: num(f[5])?,
            task: f[6].parse()?,
            variant: f[7].parse()?,
            seed: f[8].parse().map_err(|_| bad())?,
        })
    }
}

/// Latent goal `E(g)`: the object embedding of the target's skeleton.
pub fn goal_embedding(env: &DoughEnv, encoder: &GraphEncoder, k: usize) -> Result<LatentState> {
    let surface = surface_points(&env.target.points, env.state.rest_spacing)?;
    let skeleton = extract_skeleton(&surface, k)?;
    Ok(encoder.embed_objects(&[&skeleton])?[0])
}

/// A single episode in progress.
struct EpisodeRun {
    env: DoughEnv,
    goal: LatentState,
    skeleton: SkeletonGraph,
    eps: LatentState,
    last_reward: f64,
    segment: Option<Vec<ToolPose>>,
    trajectory: Vec<(SkeletonGraph, ToolPose)>,
}

impl EpisodeRun {
    fn start(cfg: &TrainConfig, encoder: &GraphEncoder, seed: u64) -> Result<Self> {
        let env = DoughEnv::new(cfg.task, cfg.shape, seed, cfg.sim.clone(), cfg.weights)?;
        let goal = goal_embedding(&env, encoder, cfg.skeleton_nodes)?;
        let skeleton = extract_skeleton(&env.surface()?, cfg.skeleton_nodes)?;
        let eps = encoder.embed_objects(&[&skeleton])?[0];
        let last_reward = env.metrics()?.reward;
        let trajectory = vec![(skeleton.clone(), env.pose)];
        Ok(Self { env, goal, skeleton, eps, last_reward, segment: None, trajectory })
    }

    fn step(
        &mut self,
        agent: &Agent,
        encoder: &GraphEncoder,
        cfg: &TrainConfig,
        deterministic: bool,
        done: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Transition> {
        let (target, action) = agent.act(&self.eps, &self.goal, deterministic, rng)?;
        let pose = self.env.pose;
        // Smoothing can leave the last waypoint a hair outside the box.
        let waypoints: Vec<ToolPose> =
            plan_trajectory(&pose, &target, self.segment.as_deref(), &cfg.lqt).iter().map(|w| self.env.tool.clamp(w)).collect();
        self.env.step(&waypoints)?;
        let skeleton = extract_skeleton(&self.env.surface()?, cfg.skeleton_nodes)?;
        let eps_next = encoder.embed_objects(&[&skeleton])?[0];
        let reward = self.env.metrics()?.reward;
        let t = Transition {
            eps: self.eps,
            goal: self.goal,
            action,
            reward: reward - self.last_reward,
            eps_next,
            done,
            skeleton: std::mem::replace(&mut self.skeleton, skeleton.clone()),
            skeleton_next: skeleton.clone(),
            pose,
            pose_next: self.env.pose,
        };
        self.trajectory.push((skeleton, self.env.pose));
        self.segment = Some(waypoints);
        self.eps = eps_next;
        self.last_reward = reward;
        Ok(t)
    }

    fn log(&self, episode: usize, step: usize, cfg: &TrainConfig) -> Result<EpisodeLog> {
        let m = self.env.metrics()?;
        Ok(EpisodeLog {
            episode,
            step,
            reward: m.reward,
            iou: m.iou,
            sdf_score: m.sdf_score,
            density_score: m.density_score,
            task: cfg.task,
            variant: cfg.variant,
            seed: cfg.seed,
        })
    }
}

/// Encoder weights inside a saved run directory.
pub const ENCODER_FILE: &str = "encoder.ckpt";

#[derive(Serialize, Deserialize)]
struct TrainerState {
    config: TrainConfig,
    episode: usize,
    env_steps: usize,
    events: Vec<UpdateEvent>,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub agent: Agent,
    /// Absent for the `sac` variant.
    pub gpt: Option<SoftGpt>,
    /// Frozen stage-1 encoder shared by states and goals.
    pub encoder: GraphEncoder,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    episode: usize,
    env_steps: usize,
    events: Vec<UpdateEvent>,
    trajectories: VecDeque<Vec<(SkeletonGraph, ToolPose)>>,
}

impl Trainer {
    /// `pretrained` is required for `softgpt_full` and ignored otherwise.
    pub fn new(config: TrainConfig, encoder: GraphEncoder, pretrained: Option<SoftGpt>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gpt = match config.variant {
            Variant::Sac => None,
            Variant::SoftgptS | Variant::SoftgptSr => Some(SoftGpt::new(config.softgpt, &mut rng)?),
            Variant::SoftgptFull => {
                let gpt = pretrained.ok_or_else(|| Error::Config("softgpt_full needs a pretrained SoftGPT checkpoint".into()))?;
                if config.agent.think.horizon > gpt.config.context {
                    return Err(Error::Config("thinking horizon exceeds the pretrained SoftGPT context".into()));
                }
                Some(gpt)
            }
        };
        let agent = Agent::new(config.task.tool(), config.agent, &mut rng)?;
        Ok(Self {
            buffer: ReplayBuffer::new(config.agent.buffer_capacity)?,
            agent,
            gpt,
            encoder,
            rng,
            episode: 0,
            env_steps: 0,
            events: Vec::new(),
            trajectories: VecDeque::new(),
            config,
        })
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn events(&self) -> &[UpdateEvent] {
        &self.events
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Runs one training episode, updating on cadence as steps accrue.
    pub fn run_episode(&mut self) -> Result<EpisodeLog> {
        let cfg = self.config.clone();
        let mut run = EpisodeRun::start(&cfg, &self.encoder, cfg.episode_seed(self.episode, false))?;
        for t in 0..cfg.steps_per_episode {
            let done = t + 1 == cfg.steps_per_episode;
            let transition = run.step(&self.agent, &self.encoder, &cfg, false, done, &mut self.rng)?;
            self.buffer.push(transition);
            self.env_steps += 1;
            self.on_step(&run.trajectory)?;
        }
        let log = run.log(self.episode, self.env_steps, &cfg)?;
        self.trajectories.push_back(run.trajectory);
        while self.trajectories.len() > cfg.gpt_recent_episodes.max(1) {
            self.trajectories.pop_front();
        }
        log::info!("{} episode {}: reward {:.4} iou {:.4}", cfg.variant, self.episode, log.reward, log.iou);
        self.episode += 1;
        Ok(log)
    }

    /// Trains until `config.episodes` episodes are done, reporting each.
    pub fn run(&mut self, mut on_episode: impl FnMut(&EpisodeLog) -> Result<()>) -> Result<Vec<EpisodeLog>> {
        let mut logs = Vec::new();
        while self.episode < self.config.episodes {
            let log = self.run_episode()?;
            on_episode(&log)?;
            logs.push(log);
        }
        Ok(logs)
    }

    fn on_step(&mut self, current: &[(SkeletonGraph, ToolPose)]) -> Result<()> {
        let s = self.env_steps;
        let features = self.config.variant.features();
        if s.is_multiple_of(self.config.update_every) {
            self.events.push(UpdateEvent { step: s, kind: EventKind::Policy });
            for _ in 0..self.config.updates_per_event {
                let items = self.buffer.sample(self.config.agent.batch, &mut self.rng)?;
                let batch = Batch::new(&items)?;
                let world = self.gpt.as_ref().map(|gpt| World { gpt, encoder: &self.encoder });
                self.agent.update_critics(&batch, world, features, &mut self.rng)?;
                self.agent.update_actor(&batch, world, features, &mut self.rng)?;
                if features.latent_reward {
                    self.agent.update_reward_model(&batch)?;
                }
            }
        }
        if let Some(gpt) = self.gpt.as_mut().filter(|_| s.is_multiple_of(self.config.gpt_update_every)) {
            self.events.push(UpdateEvent { step: s, kind: EventKind::SoftGpt });
            let sequences = self
                .trajectories
                .iter()
                .map(Vec::as_slice)
                .chain(std::iter::once(current))
                .filter(|t| t.len() >= 2)
                .map(shift_dataset)
                .collect::<Result<Vec<_>>>()?;
            let cfg = PretrainConfig { seed: self.config.seed ^ s as u64, ..self.config.finetune };
            finetune(gpt, &self.encoder, &sequences, &cfg)?;
        }
        Ok(())
    }

    /// Writes the agent, encoder, SoftGPT and loop counters under `dir`.
    /// The replay buffer is not saved.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.agent.save(&dir.join("agent"))?;
        self.encoder.save(&dir.join(ENCODER_FILE))?;
        if let Some(gpt) = &self.gpt {
            gpt.save(&dir.join("softgpt.ckpt"))?;
        }
        let state =
            TrainerState { config: self.config.clone(), episode: self.episode, env_steps: self.env_steps, events: self.events.clone() };
        let path = dir.join("trainer.json");
        fs::write(&path, serde_json::to_vec_pretty(&state)?).map_err(|e| Error::io(&path, e))
    }

    /// Continues a saved run at its next episode with an empty replay buffer.
    /// `episodes` replaces the saved episode budget when given.
    pub fn resume(dir: &Path, episodes: Option<usize>) -> Result<Self> {
        let path = dir.join("trainer.json");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut state: TrainerState = serde_json::from_slice(&bytes)?;
        if let Some(n) = episodes {
            state.config.episodes = n;
        }
        state.config.validate()?;
        let agent = Agent::load(&dir.join("agent"))?;
        let encoder = GraphEncoder::load(&dir.join(ENCODER_FILE))?;
        if agent.kind != state.config.task.tool() {
            return Err(Error::Config(format!("checkpoint holds a {} agent, the task needs {}", agent.kind, state.config.task.tool())));
        }
        let gpt = if state.config.variant.uses_softgpt() { Some(SoftGpt::load(&dir.join("softgpt.ckpt"))?) } else { None };
        let rng = ChaCha8Rng::seed_from_u64(state.config.seed ^ ((state.episode as u64) << 32));
        Ok(Self {
            buffer: ReplayBuffer::new(state.config.agent.buffer_capacity)?,
            agent,
            gpt,
            encoder,
            rng,
            episode: state.episode,
            env_steps: state.env_steps,
            events: state.events,
            trajectories: VecDeque::new(),
            config: state.config,
        })
    }
}

/// Greedy episodes of `agent` on evaluation seeds.
pub fn evaluate(agent: &Agent, encoder: &GraphEncoder, cfg: &TrainConfig, episodes: usize) -> Result<Vec<EpisodeLog>> {
    evaluate_with_frames(agent, encoder, cfg, episodes, |_, _| Ok(()))
}

/// [`evaluate`], handing `on_frame(episode, positions)` the particles at
/// the start of each episode and after every step.
pub fn evaluate_with_frames(
    agent: &Agent,
    encoder: &GraphEncoder,
    cfg: &TrainConfig,
    episodes: usize,
    mut on_frame: impl FnMut(usize, &[[f64; 3]]) -> Result<()>,
) -> Result<Vec<EpisodeLog>> {
    cfg.validate()?;
    if agent.kind != cfg.task.tool() {
        return Err(Error::Config(format!("agent drives a {}, the task needs {}", agent.kind, cfg.task.tool())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut steps = 0;
    (0..episodes)
        .map(|k| {
            let mut run = EpisodeRun::start(cfg, encoder, cfg.episode_seed(k, true))?;
            on_frame(k, &run.env.state.positions)?;
            for t in 0..cfg.steps_per_episode {
                run.step(agent, encoder, cfg, true, t + 1 == cfg.steps_per_episode, &mut rng)?;
                on_frame(k, &run.env.state.positions)?;
                steps += 1;
            }
            run.log(k, steps, cfg)
        })
        .collect()
}

/// Mean of the last `window` values ending at each index.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let s = &values[(i + 1).saturating_sub(w)..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// First episode (1-based count) whose trailing mean reaches `threshold`.
pub fn episodes_to_threshold(rewards: &[f64], threshold: f64, window: usize) -> Option<usize> {
    trailing_mean(rewards, window).iter().position(|&m| m >= threshold).map(|i| i + 1)
}
