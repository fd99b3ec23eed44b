//! Actor-critic PPO: network, Gaussian policy, GAE, rollouts and training.

mod buffer;
mod eval;
mod gae;
mod network;
mod policy;
mod train;
mod update;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use buffer::{normalize, rollout, RolloutBuffer, ADV_STD_FLOOR};
pub use eval::{evaluate, summarize, EvalEpisode, EvalSummary};
pub use gae::compute_gae;
pub use network::{
    forward, init_params, Forward, PolicyParams, HIDDEN, INIT_LOG_STD, LOG_STD_MAX, LOG_STD_MIN,
    TENSOR_NAMES,
};
pub use policy::{gaussian_entropy, gaussian_log_prob, log_prob, mixture_log_prob, sample_action};
pub use train::{
    read_metrics, train, train_with_progress, Checkpoint, TrainConfig, TrainMetrics,
    TrainingArtifacts, WorldSource, METRICS_HEADER,
};
pub use update::{evaluate_loss, loss_and_gradient, Adam, LossStats, Minibatch, PpoLearner, UpdateStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyper {
    /// Ratio clip range of the surrogate objective.
    pub clip_eps: f64,
    /// Weight of the uniform exploration component in the behavior policy.
    pub explore_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub n_epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub horizon: usize,
    pub n_envs: usize,
    pub total_env_steps: u64,
    pub max_grad_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            explore_eps: 0.0,
            gamma: 0.99,
            lambda: 0.95,
            lr: 3e-4,
            n_epochs: 4,
            minibatch_size: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            horizon: 128,
            n_envs: 8,
            total_env_steps: 3_000_000,
            max_grad_norm: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl PpoHyper {
    pub fn steps_per_update(&self) -> u64 {
        (self.n_envs * self.horizon) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.clip_eps > 0.0 && self.clip_eps < 1.0, "clip_eps must lie in (0, 1)"),
            ((0.0..=1.0).contains(&self.explore_eps), "explore_eps must lie in [0, 1]"),
            (self.gamma > 0.0 && self.gamma <= 1.0, "gamma must lie in (0, 1]"),
            ((0.0..=1.0).contains(&self.lambda), "lambda must lie in [0, 1]"),
            (self.lr > 0.0, "lr must be positive"),
            (self.horizon >= 1, "horizon must be at least 1"),
            (self.n_envs >= 1, "n_envs must be at least 1"),
            (self.minibatch_size >= 1, "minibatch_size must be at least 1"),
            (self.max_grad_norm > 0.0, "max_grad_norm must be positive"),
            (self.value_coef >= 0.0, "value_coef must be non-negative"),
            ((0.0..1.0).contains(&self.adam_beta1), "adam_beta1 must lie in [0, 1)"),
            ((0.0..1.0).contains(&self.adam_beta2), "adam_beta2 must lie in [0, 1)"),
            (self.adam_eps > 0.0, "adam_eps must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config(msg.to_string())),
            None => Ok(()),
        }
    }
}
