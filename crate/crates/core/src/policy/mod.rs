//! Goal-conditioned tool-pose policy: SAC with latent rewards and imagined
//! rollouts, trajectory planning between poses, and the training loop.

mod agent;
mod lqt;
mod networks;
mod replay;
mod returns;
mod train;

pub use agent::{standard_normal, Agent, AgentConfig, Features, ThinkConfig, World};
pub use lqt::{plan_trajectory, riccati_gains, track_scalar, LqtConfig, WAYPOINTS};
pub use networks::{unit_to_pose, ActionSample, Actor, Critic, RewardModel, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use returns::{q_lambda, q_lambda_coefficients, q_tilde};
pub use train::{
    episodes_to_threshold, evaluate, evaluate_with_frames, goal_embedding, trailing_mean, EpisodeLog, EventKind, TrainConfig, Trainer,
    UpdateEvent, Variant, CSV_HEADER, ENCODER_FILE,
};
