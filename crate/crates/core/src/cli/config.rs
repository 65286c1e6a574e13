use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softworld::dynamics::{PretrainConfig, SoftGptConfig};
use softworld::explorer::ExplorationConfig;
use softworld::policy::{AgentConfig, LqtConfig, TrainConfig, Variant};
use softworld::sim::{check_pairing, RewardWeights, Shape, SimConfig, Task, ToolKind};

use super::Failure;

/// One JSON document drives every command. Unknown keys are rejected at
/// every level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    /// Redundant with `task`; checked against it when present.
    pub tool: Option<ToolKind>,
    pub shape: Shape,
    pub variant: Variant,
    /// One training run per seed.
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    /// Every n-th dataset sequence is held out of pretraining and scored.
    pub held_out_every: usize,
    /// Episodes between run checkpoints while training.
    pub checkpoint_every: usize,
    pub exploration: ExplorationConfig,
    pub pretrain: PretrainConfig,
    pub softgpt: SoftGptConfig,
    pub training: TrainingSection,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Rolling,
            tool: None,
            shape: Shape::Ball,
            variant: Variant::Sac,
            seeds: vec![0],
            eval_episodes: 10,
            held_out_every: 5,
            checkpoint_every: 10,
            exploration: ExplorationConfig::default(),
            pretrain: PretrainConfig::default(),
            softgpt: SoftGptConfig::default(),
            training: TrainingSection::default(),
            paths: Paths::default(),
        }
    }
}

/// The policy-loop settings of [`TrainConfig`] that the top level does not
/// already carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub update_every: usize,
    pub gpt_update_every: usize,
    pub updates_per_event: usize,
    pub gpt_recent_episodes: usize,
    pub skeleton_nodes: usize,
    pub agent: AgentConfig,
    pub finetune: PretrainConfig,
    pub sim: SimConfig,
    pub weights: RewardWeights,
    pub lqt: LqtConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            episodes: t.episodes,
            steps_per_episode: t.steps_per_episode,
            update_every: t.update_every,
            gpt_update_every: t.gpt_update_every,
            updates_per_event: t.updates_per_event,
            gpt_recent_episodes: t.gpt_recent_episodes,
            skeleton_nodes: t.skeleton_nodes,
            agent: t.agent,
            finetune: t.finetune,
            sim: t.sim,
            weights: t.weights,
            lqt: t.lqt,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if let Some(tool) = self.tool.filter(|&t| t != self.task.tool()) {
            return Err(Failure::config(format!("tool {tool} does not serve the {} task", self.task)));
        }
        check_pairing(self.task, self.shape).map_err(|e| Failure::config(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(Failure::config("seeds must list at least one seed"));
        }
        if self.held_out_every < 2 || self.checkpoint_every == 0 {
            return Err(Failure::config("held_out_every must be at least 2 and checkpoint_every positive"));
        }
        self.exploration.validate().map_err(|e| Failure::config(e.to_string()))?;
        self.softgpt.validate().map_err(|e| Failure::config(e.to_string()))?;
        for seed in &self.seeds {
            self.train_config(*seed).validate().map_err(|e| Failure::config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = self.training.clone();
        TrainConfig {
            task: self.task,
            shape: self.shape,
            variant: self.variant,
            seed,
            episodes: t.episodes,
            steps_per_episode: t.steps_per_episode,
            update_every: t.update_every,
            gpt_update_every: t.gpt_update_every,
            updates_per_event: t.updates_per_event,
            gpt_recent_episodes: t.gpt_recent_episodes,
            skeleton_nodes: t.skeleton_nodes,
            agent: t.agent,
            softgpt: self.softgpt,
            finetune: t.finetune,
            sim: t.sim,
            weights: t.weights,
            lqt: t.lqt,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_library() {
        assert_eq!(RunConfig::default().train_config(0), TrainConfig::default());
        RunConfig::default().validate().unwrap();
        let parsed: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_any_depth() {
        for text in
            [r#"{"tasks": "rolling"}"#, r#"{"training": {"epsiodes": 3}}"#, r#"{"training": {"agent": {"think": {"horizon": 2, "h": 1}}}}"#]
        {
            assert!(serde_json::from_str::<RunConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn cross_field_checks() {
        let knife = RunConfig { tool: Some(ToolKind::Knife), ..RunConfig::default() };
        assert_eq!(knife.validate().unwrap_err().code, super::super::exit::CONFIG);
        let twin = RunConfig { shape: Shape::TwoBalls, ..RunConfig::default() };
        assert!(twin.validate().is_err());
        let none = RunConfig { seeds: vec![], ..RunConfig::default() };
        assert!(none.validate().is_err());
        let cfg = RunConfig { seeds: vec![4, 9], ..RunConfig::default() };
        assert_eq!(cfg.train_config(9).seed, 9);
    }
}
