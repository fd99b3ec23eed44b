//! Rollout collection across a batch of environments.

use rayon::prelude::*;

use super::gae::compute_gae;
use super::network::{forward_unchecked, PolicyParams};
use super::policy::sample_action;
use crate::env::{Action, ACTION_DIM};
use crate::error::{Error, Result};
use crate::vec_env::{EnvSlot, EpisodeSummary, VecEnv};
use crate::world::World;
use crate::EnvConfig;

pub const ADV_STD_FLOOR: f64 = 1e-8;

/// Transitions of one rollout, laid out row-major as `[env][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub bootstrap_values: Vec<f64>,
    /// Normalized advantages, filled by [`RolloutBuffer::finalize`].
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Episodes that ended during the rollout, in env then time order.
    pub episodes: Vec<EpisodeSummary>,
    /// Episode step index reached by each transition.
    pub step_indices: Vec<u32>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn observation(&self, index: usize) -> &[f64] {
        &self.observations[index * self.obs_dim..(index + 1) * self.obs_dim]
    }

    pub fn is_finalized(&self) -> bool {
        self.advantages.len() == self.len()
    }

    /// Runs GAE per env row, then normalizes advantages over the whole buffer.
    pub fn finalize(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let h = self.horizon;
        let mut advantages = Vec::with_capacity(self.len());
        let mut returns = Vec::with_capacity(self.len());
        for e in 0..self.n_envs {
            let row = e * h..(e + 1) * h;
            let (a, r) = compute_gae(
                &self.rewards[row.clone()],
                &self.values[row.clone()],
                &self.dones[row],
                self.bootstrap_values[e],
                gamma,
                lambda,
            )?;
            advantages.extend(a);
            returns.extend(r);
        }
        normalize(&mut advantages);
        self.advantages = advantages;
        self.returns = returns;
        Ok(())
    }
}

/// Shifts to zero mean and scales to unit population std (floored).
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(ADV_STD_FLOOR);
    for x in xs.iter_mut() {
        *x = (*x - mean) / std;
    }
}

struct EnvRow {
    observations: Vec<f64>,
    actions: Vec<[f64; ACTION_DIM]>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    values: Vec<f64>,
    bootstrap: f64,
    episodes: Vec<EpisodeSummary>,
    step_indices: Vec<u32>,
}

fn collect_row(
    params: &PolicyParams,
    slot: &mut EnvSlot,
    world: &World,
    cfg: &EnvConfig,
    horizon: usize,
    explore_eps: f64,
) -> Result<EnvRow> {
    let mut row = EnvRow {
        observations: Vec::with_capacity(horizon * params.obs_dim),
        actions: Vec::with_capacity(horizon),
        log_probs: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        dones: Vec::with_capacity(horizon),
        values: Vec::with_capacity(horizon),
        bootstrap: 0.0,
        episodes: Vec::new(),
        step_indices: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let obs = slot.observation().as_slice();
        let fwd = forward_unchecked(params, obs);
        row.observations.extend_from_slice(obs);
        let (action, log_prob) = sample_action(&fwd.mu, &fwd.log_std, explore_eps, &mut slot.rng);
        let tr = slot.step(Action::from(action), world, cfg)?;
        row.step_indices.push(match tr.episode {
            Some(ep) => ep.length,
            None => slot.state().step_index,
        });
        row.actions.push(action);
        row.log_probs.push(log_prob);
        row.rewards.push(tr.reward.total);
        row.dones.push(tr.done);
        row.values.push(fwd.value);
        row.episodes.extend(tr.episode);
    }
    row.bootstrap = forward_unchecked(params, slot.observation().as_slice()).value;
    Ok(row)
}

/// Steps every environment `horizon` times under the current policy.
///
/// Each environment samples actions from its own stream, so the result is
/// identical whether rows are collected on worker threads or sequentially.
pub fn rollout(
    params: &PolicyParams,
    envs: &mut VecEnv,
    horizon: usize,
    explore_eps: f64,
    parallel: bool,
) -> Result<RolloutBuffer> {
    if envs.obs_dim() != params.obs_dim {
        return Err(Error::Shape(format!(
            "environment obs_dim {} differs from network obs_dim {}",
            envs.obs_dim(),
            params.obs_dim
        )));
    }
    let n_envs = envs.len();
    let obs_dim = params.obs_dim;
    let (world, cfg, slots) = envs.split_mut();
    let rows: Vec<EnvRow> = if parallel {
        slots
            .par_iter_mut()
            .map(|slot| collect_row(params, slot, world, cfg, horizon, explore_eps))
            .collect::<Result<_>>()?
    } else {
        slots
            .iter_mut()
            .map(|slot| collect_row(params, slot, world, cfg, horizon, explore_eps))
            .collect::<Result<_>>()?
    };

    let mut buf = RolloutBuffer {
        n_envs,
        horizon,
        obs_dim,
        observations: Vec::with_capacity(n_envs * horizon * obs_dim),
        actions: Vec::with_capacity(n_envs * horizon),
        log_probs: Vec::with_capacity(n_envs * horizon),
        rewards: Vec::with_capacity(n_envs * horizon),
        dones: Vec::with_capacity(n_envs * horizon),
        values: Vec::with_capacity(n_envs * horizon),
        bootstrap_values: Vec::with_capacity(n_envs),
        advantages: Vec::new(),
        returns: Vec::new(),
        episodes: Vec::new(),
        step_indices: Vec::with_capacity(n_envs * horizon),
    };
    for row in rows {
        buf.observations.extend(row.observations);
        buf.actions.extend(row.actions);
        buf.log_probs.extend(row.log_probs);
        buf.rewards.extend(row.rewards);
        buf.dones.extend(row.dones);
        buf.values.extend(row.values);
        buf.bootstrap_values.push(row.bootstrap);
        buf.episodes.extend(row.episodes);
        buf.step_indices.extend(row.step_indices);
    }
    Ok(buf)
}
