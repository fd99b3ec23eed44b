//! Diagonal Gaussian policy head with an optional uniform exploration mixture.
//!
//! With mixture weight `eps` the behavior density is
//! `(1 - eps) * N(a; mu, sigma^2) + eps / 8 * 1{a in [-1, 1]^3}`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::ACTION_DIM;

const LN_UNIFORM_DENSITY: f64 = -2.0794415416798357; // ln(1/8)

fn half_ln_two_pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

pub fn gaussian_log_prob(
    mu: &[f64; ACTION_DIM],
    log_std: &[f64; ACTION_DIM],
    action: &[f64; ACTION_DIM],
) -> f64 {
    (0..ACTION_DIM)
        .map(|i| {
            let z = (action[i] - mu[i]) / log_std[i].exp();
            -0.5 * z * z - log_std[i] - half_ln_two_pi()
        })
        .sum()
}

fn in_cube(action: &[f64; ACTION_DIM]) -> bool {
    action.iter().all(|a| (-1.0..=1.0).contains(a))
}

/// Log-density of the mixture, plus the posterior weight of the Gaussian
/// component, `d log p = weight * d log N`.
pub fn mixture_log_prob(
    mu: &[f64; ACTION_DIM],
    log_std: &[f64; ACTION_DIM],
    explore_eps: f64,
    action: &[f64; ACTION_DIM],
) -> (f64, f64) {
    let log_gauss = gaussian_log_prob(mu, log_std, action);
    if explore_eps <= 0.0 {
        return (log_gauss, 1.0);
    }
    let uniform = if in_cube(action) {
        explore_eps.ln() + LN_UNIFORM_DENSITY
    } else {
        f64::NEG_INFINITY
    };
    if explore_eps >= 1.0 {
        return (uniform, 0.0);
    }
    let gauss = (1.0 - explore_eps).ln() + log_gauss;
    let hi = gauss.max(uniform);
    let log_p = hi + ((gauss - hi).exp() + (uniform - hi).exp()).ln();
    (log_p, (gauss - log_p).exp())
}

pub fn log_prob(
    mu: &[f64; ACTION_DIM],
    log_std: &[f64; ACTION_DIM],
    explore_eps: f64,
    action: &[f64; ACTION_DIM],
) -> f64 {
    mixture_log_prob(mu, log_std, explore_eps, action).0
}

/// Closed-form entropy of the Gaussian component.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|l| 0.5 * (1.0 + (2.0 * PI).ln() + 2.0 * l)).sum()
}

/// Draws an (unclamped) action from the behavior mixture and returns it with
/// its log-density.
pub fn sample_action(
    mu: &[f64; ACTION_DIM],
    log_std: &[f64; ACTION_DIM],
    explore_eps: f64,
    rng: &mut impl Rng,
) -> ([f64; ACTION_DIM], f64) {
    let explore = explore_eps > 0.0 && rng.random::<f64>() < explore_eps;
    let mut action = [0.0; ACTION_DIM];
    for i in 0..ACTION_DIM {
        action[i] = if explore {
            rng.random_range(-1.0..=1.0)
        } else {
            let z: f64 = rng.sample(StandardNormal);
            mu[i] + log_std[i].exp() * z
        };
    }
    (action, log_prob(mu, log_std, explore_eps, &action))
}
