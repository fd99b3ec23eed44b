//! Clipped-surrogate loss, its gradient, and the Adam update.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::buffer::RolloutBuffer;
use super::network::{backward, forward_unchecked, PolicyParams};
use super::policy::{gaussian_entropy, mixture_log_prob};
use super::PpoHyper;
use crate::env::ACTION_DIM;
use crate::error::{Error, Result};

/// Samples per gradient work item. Chunk gradients are summed in chunk order,
/// which keeps results independent of the number of worker threads.
const GRAD_CHUNK: usize = 32;

/// A gathered set of transitions to evaluate the loss on.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub obs_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn gather(buf: &RolloutBuffer, indices: &[usize]) -> Self {
        let mut mb = Minibatch {
            obs_dim: buf.obs_dim,
            observations: Vec::with_capacity(indices.len() * buf.obs_dim),
            actions: Vec::with_capacity(indices.len()),
            old_log_probs: Vec::with_capacity(indices.len()),
            advantages: Vec::with_capacity(indices.len()),
            returns: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            mb.observations.extend_from_slice(buf.observation(i));
            mb.actions.push(buf.actions[i]);
            mb.old_log_probs.push(buf.log_probs[i]);
            mb.advantages.push(buf.advantages[i]);
            mb.returns.push(buf.returns[i]);
        }
        mb
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }
}

/// Loss terms averaged over a minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_frac: f64,
    /// Largest `|ratio - 1|` in the minibatch.
    pub max_ratio_deviation: f64,
}

#[derive(Default)]
struct Partial {
    surrogate: f64,
    squared_error: f64,
    clipped: usize,
    max_dev: f64,
}

struct SampleTerms {
    ratio: f64,
    surrogate: f64,
    /// d(surrogate)/d(log pi), zero when the clipped branch is active.
    d_surrogate: f64,
    weight: f64,
}

fn surrogate_terms(log_p: f64, old_log_p: f64, advantage: f64, clip_eps: f64) -> SampleTerms {
    let ratio = (log_p - old_log_p).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    let (surrogate, d_surrogate) = if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    };
    SampleTerms {
        ratio,
        surrogate,
        d_surrogate,
        weight: 0.0,
    }
}

fn finish(partial: Partial, n: usize, params: &PolicyParams, hyper: &PpoHyper) -> LossStats {
    let nf = n as f64;
    let policy_loss = -partial.surrogate / nf;
    let value_loss = partial.squared_error / nf;
    let entropy = gaussian_entropy(&params.log_std);
    LossStats {
        policy_loss,
        value_loss,
        entropy,
        total: policy_loss + hyper.value_coef * value_loss - hyper.entropy_coef * entropy,
        clip_frac: partial.clipped as f64 / nf,
        max_ratio_deviation: partial.max_dev,
    }
}

/// Total loss only (no gradient).
pub fn evaluate_loss(params: &PolicyParams, mb: &Minibatch, hyper: &PpoHyper) -> LossStats {
    let mut partial = Partial::default();
    for i in 0..mb.len() {
        let fwd = forward_unchecked(params, mb.observation(i));
        let (log_p, _) = mixture_log_prob(&fwd.mu, &fwd.log_std, hyper.explore_eps, &mb.actions[i]);
        let t = surrogate_terms(log_p, mb.old_log_probs[i], mb.advantages[i], hyper.clip_eps);
        accumulate(&mut partial, &t, fwd.value - mb.returns[i], hyper.clip_eps);
    }
    finish(partial, mb.len(), params, hyper)
}

fn accumulate(partial: &mut Partial, t: &SampleTerms, value_error: f64, clip_eps: f64) {
    partial.surrogate += t.surrogate;
    partial.squared_error += value_error * value_error;
    let dev = (t.ratio - 1.0).abs();
    if dev > clip_eps {
        partial.clipped += 1;
    }
    partial.max_dev = partial.max_dev.max(dev);
}

fn chunk_gradient(
    params: &PolicyParams,
    mb: &Minibatch,
    range: std::ops::Range<usize>,
    hyper: &PpoHyper,
) -> (Partial, PolicyParams) {
    let n = mb.len() as f64;
    let mut grads = PolicyParams::zeros(params.obs_dim);
    let mut partial = Partial::default();
    for i in range {
        let obs = mb.observation(i);
        let fwd = forward_unchecked(params, obs);
        let action = &mb.actions[i];
        let (log_p, weight) = mixture_log_prob(&fwd.mu, &fwd.log_std, hyper.explore_eps, action);
        let mut t = surrogate_terms(log_p, mb.old_log_probs[i], mb.advantages[i], hyper.clip_eps);
        t.weight = weight;
        let value_error = fwd.value - mb.returns[i];
        accumulate(&mut partial, &t, value_error, hyper.clip_eps);

        // Loss = -surrogate/n, so dL/dlogp = -d_surrogate/n, spread over the
        // Gaussian component through the mixture weight.
        let d_log_p = -t.d_surrogate * t.weight / n;
        let mut d_mu = [0.0; ACTION_DIM];
        if d_log_p != 0.0 {
            for k in 0..ACTION_DIM {
                let sigma = fwd.log_std[k].exp();
                let z = (action[k] - fwd.mu[k]) / sigma;
                d_mu[k] = d_log_p * z / sigma;
                grads.log_std[k] += d_log_p * (z * z - 1.0);
            }
        }
        let d_value = hyper.value_coef * 2.0 * value_error / n;
        backward(params, obs, &fwd, &d_mu, d_value, &mut grads);
    }
    (partial, grads)
}

/// Loss and its exact gradient with respect to every parameter.
pub fn loss_and_gradient(
    params: &PolicyParams,
    mb: &Minibatch,
    hyper: &PpoHyper,
) -> (LossStats, PolicyParams) {
    let chunks: Vec<_> = (0..mb.len())
        .step_by(GRAD_CHUNK)
        .map(|start| start..(start + GRAD_CHUNK).min(mb.len()))
        .collect();
    let parts: Vec<(Partial, PolicyParams)> = chunks
        .into_par_iter()
        .map(|range| chunk_gradient(params, mb, range, hyper))
        .collect();

    let mut grads = PolicyParams::zeros(params.obs_dim);
    let mut total = Partial::default();
    for (p, g) in parts {
        total.surrogate += p.surrogate;
        total.squared_error += p.squared_error;
        total.clipped += p.clipped;
        total.max_dev = total.max_dev.max(p.max_dev);
        grads.add_scaled(&g, 1.0);
    }
    // Entropy bonus: dH/dlog_std = 1 per component.
    for g in &mut grads.log_std {
        *g -= hyper.entropy_coef;
    }
    (finish(total, mb.len(), params, hyper), grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub step: u64,
    m: PolicyParams,
    v: PolicyParams,
}

impl Adam {
    pub fn new(obs_dim: usize) -> Self {
        Self {
            step: 0,
            m: PolicyParams::zeros(obs_dim),
            v: PolicyParams::zeros(obs_dim),
        }
    }

    pub fn apply(&mut self, params: &mut PolicyParams, grads: &PolicyParams, hyper: &PpoHyper) {
        self.step += 1;
        let (b1, b2) = (hyper.adam_beta1, hyper.adam_beta2);
        let bias1 = 1.0 - b1.powi(self.step as i32);
        let bias2 = 1.0 - b2.powi(self.step as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.adam_eps);
            }
        }
    }
}

/// Averages over all minibatches of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub minibatches: usize,
    /// Stats of the first minibatch of the first epoch, before any step.
    pub first_minibatch: LossStats,
}

/// Policy parameters together with their optimizer state.
#[derive(Debug, Clone)]
pub struct PpoLearner {
    pub params: PolicyParams,
    pub adam: Adam,
}

impl PpoLearner {
    pub fn new(params: PolicyParams) -> Self {
        let adam = Adam::new(params.obs_dim);
        Self { params, adam }
    }

    /// Runs `n_epochs` passes of shuffled minibatch updates over a finalized
    /// buffer. On divergence the parameters and optimizer state are left
    /// exactly as they were before the call.
    pub fn update(
        &mut self,
        buf: &RolloutBuffer,
        hyper: &PpoHyper,
        rng: &mut impl Rng,
    ) -> Result<UpdateStats> {
        if !buf.is_finalized() {
            return Err(Error::Shape("rollout buffer has not been finalized".into()));
        }
        if buf.obs_dim != self.params.obs_dim {
            return Err(Error::Shape(format!(
                "buffer obs_dim {} differs from network obs_dim {}",
                buf.obs_dim, self.params.obs_dim
            )));
        }
        let snapshot = self.clone();
        match self.run_epochs(buf, hyper, rng) {
            Ok(stats) => Ok(stats),
            Err(e) => {
                *self = snapshot;
                Err(e)
            }
        }
    }

    fn run_epochs(
        &mut self,
        buf: &RolloutBuffer,
        hyper: &PpoHyper,
        rng: &mut impl Rng,
    ) -> Result<UpdateStats> {
        let mut indices: Vec<usize> = (0..buf.len()).collect();
        let mut stats = UpdateStats::default();
        let mb_size = hyper.minibatch_size.max(1);
        for _ in 0..hyper.n_epochs {
            indices.shuffle(rng);
            for chunk in indices.chunks(mb_size) {
                let mb = Minibatch::gather(buf, chunk);
                let (loss, mut grads) = loss_and_gradient(&self.params, &mb, hyper);
                let grad_norm = grads.squared_norm().sqrt();
                if !loss.total.is_finite() || !grad_norm.is_finite() {
                    return Err(Error::NumericalDivergence(format!(
                        "non-finite loss {} or gradient norm {grad_norm} at optimizer step {}",
                        loss.total,
                        self.adam.step + 1
                    )));
                }
                if grad_norm > hyper.max_grad_norm {
                    grads.scale(hyper.max_grad_norm / grad_norm);
                }
                if stats.minibatches == 0 {
                    stats.first_minibatch = loss;
                }
                self.adam.apply(&mut self.params, &grads, hyper);
                self.params.clamp_log_std();
                if !self.params.is_finite() {
                    return Err(Error::NumericalDivergence("non-finite parameters".into()));
                }
                stats.policy_loss += loss.policy_loss;
                stats.value_loss += loss.value_loss;
                stats.entropy += loss.entropy;
                stats.clip_frac += loss.clip_frac;
                stats.minibatches += 1;
            }
        }
        if stats.minibatches > 0 {
            let n = stats.minibatches as f64;
            stats.policy_loss /= n;
            stats.value_loss /= n;
            stats.entropy /= n;
            stats.clip_frac /= n;
        }
        Ok(stats)
    }
}
