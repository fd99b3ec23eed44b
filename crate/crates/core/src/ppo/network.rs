//! Two-layer tanh actor-critic MLP with hand-written backpropagation.
//!
//! Matrices are stored row-major as `[out][in]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::ACTION_DIM;
use crate::error::{Error, Result};

pub const HIDDEN: usize = 128;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const INIT_LOG_STD: f64 = -0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub obs_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w_mu: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub log_std: Vec<f64>,
    pub w_v: Vec<f64>,
    pub b_v: Vec<f64>,
}

/// Tensor names in canonical order, as used in checkpoints.
pub const TENSOR_NAMES: [&str; 9] = ["W1", "b1", "W2", "b2", "W_mu", "b_mu", "log_std", "W_v", "b_v"];

impl PolicyParams {
    pub fn zeros(obs_dim: usize) -> Self {
        Self {
            obs_dim,
            w1: vec![0.0; HIDDEN * obs_dim],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w_mu: vec![0.0; ACTION_DIM * HIDDEN],
            b_mu: vec![0.0; ACTION_DIM],
            log_std: vec![0.0; ACTION_DIM],
            w_v: vec![0.0; HIDDEN],
            b_v: vec![0.0; 1],
        }
    }

    /// `(rows, cols)` of each tensor in [`TENSOR_NAMES`] order; vectors have one row.
    pub fn shapes(obs_dim: usize) -> [(usize, usize); 9] {
        [
            (HIDDEN, obs_dim),
            (1, HIDDEN),
            (HIDDEN, HIDDEN),
            (1, HIDDEN),
            (ACTION_DIM, HIDDEN),
            (1, ACTION_DIM),
            (1, ACTION_DIM),
            (1, HIDDEN),
            (1, 1),
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 9] {
        [
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.w_mu,
            &self.b_mu,
            &self.log_std,
            &self.w_v,
            &self.b_v,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w_mu,
            &mut self.b_mu,
            &mut self.log_std,
            &mut self.w_v,
            &mut self.b_v,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors().into_iter().flat_map(|t| t.iter().copied())
    }

    /// Mutable access to the `index`-th scalar in canonical flat order.
    pub fn get_mut(&mut self, mut index: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if index < t.len() {
                return &mut t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn check_shapes(&self) -> Result<()> {
        for ((t, (r, c)), name) in self
            .tensors()
            .iter()
            .zip(Self::shapes(self.obs_dim))
            .zip(TENSOR_NAMES)
        {
            if t.len() != r * c {
                return Err(Error::Shape(format!(
                    "{name} has {} entries, expected {r}x{c}",
                    t.len()
                )));
            }
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

/// Xavier-uniform weights, zero biases, `log_std = -0.5`.
pub fn init_params(obs_dim: usize, seed: u64) -> PolicyParams {
    assert!(obs_dim >= 1, "obs_dim must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = PolicyParams::zeros(obs_dim);
    let mut fill = |w: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in w.iter_mut() {
            *v = rng.random_range(-s..=s);
        }
    };
    fill(&mut p.w1, obs_dim, HIDDEN);
    fill(&mut p.w2, HIDDEN, HIDDEN);
    fill(&mut p.w_mu, HIDDEN, ACTION_DIM);
    fill(&mut p.w_v, HIDDEN, 1);
    p.log_std.fill(INIT_LOG_STD);
    p
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let rb = b.chunks_exact(4).remainder();
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = weights * input + bias`, with `weights` row-major.
fn affine(weights: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let cols = input.len();
    for (j, o) in out.iter_mut().enumerate() {
        *o = bias[j] + dot(&weights[j * cols..(j + 1) * cols], input);
    }
}

/// Activations kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub mu: [f64; ACTION_DIM],
    pub log_std: [f64; ACTION_DIM],
    pub value: f64,
}

pub fn forward(params: &PolicyParams, obs: &[f64]) -> Result<Forward> {
    if obs.len() != params.obs_dim {
        return Err(Error::Shape(format!(
            "observation has length {}, network expects {}",
            obs.len(),
            params.obs_dim
        )));
    }
    Ok(forward_unchecked(params, obs))
}

pub(crate) fn forward_unchecked(params: &PolicyParams, obs: &[f64]) -> Forward {
    let mut h1 = vec![0.0; HIDDEN];
    affine(&params.w1, &params.b1, obs, &mut h1);
    h1.iter_mut().for_each(|v| *v = v.tanh());
    let mut h2 = vec![0.0; HIDDEN];
    affine(&params.w2, &params.b2, &h1, &mut h2);
    h2.iter_mut().for_each(|v| *v = v.tanh());
    let mut mu = [0.0; ACTION_DIM];
    affine(&params.w_mu, &params.b_mu, &h2, &mut mu);
    let value = params.b_v[0] + dot(&params.w_v, &h2);
    let mut log_std = [0.0; ACTION_DIM];
    log_std.copy_from_slice(&params.log_std);
    Forward {
        h1,
        h2,
        mu,
        log_std,
        value,
    }
}

/// Accumulates parameter gradients for one sample into `grads`, given the
/// loss gradients with respect to the mean head and the value head.
/// `log_std` gradients are handled by the caller.
pub(crate) fn backward(
    params: &PolicyParams,
    obs: &[f64],
    fwd: &Forward,
    d_mu: &[f64; ACTION_DIM],
    d_value: f64,
    grads: &mut PolicyParams,
) {
    let mut d_h2 = vec![0.0; HIDDEN];
    for (k, &g) in d_mu.iter().enumerate() {
        let row = k * HIDDEN..(k + 1) * HIDDEN;
        axpy(g, &fwd.h2, &mut grads.w_mu[row.clone()]);
        axpy(g, &params.w_mu[row], &mut d_h2);
        grads.b_mu[k] += g;
    }
    axpy(d_value, &fwd.h2, &mut grads.w_v);
    axpy(d_value, &params.w_v, &mut d_h2);
    grads.b_v[0] += d_value;

    let mut d_h1 = vec![0.0; HIDDEN];
    for j in 0..HIDDEN {
        let d_pre = d_h2[j] * (1.0 - fwd.h2[j] * fwd.h2[j]);
        let row = j * HIDDEN..(j + 1) * HIDDEN;
        axpy(d_pre, &fwd.h1, &mut grads.w2[row.clone()]);
        axpy(d_pre, &params.w2[row], &mut d_h1);
        grads.b2[j] += d_pre;
    }

    let n = params.obs_dim;
    for j in 0..HIDDEN {
        let d_pre = d_h1[j] * (1.0 - fwd.h1[j] * fwd.h1[j]);
        axpy(d_pre, obs, &mut grads.w1[j * n..(j + 1) * n]);
        grads.b1[j] += d_pre;
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    #[serde(rename = "W_mu")]
    w_mu: Vec<Vec<f64>>,
    b_mu: Vec<f64>,
    log_std: Vec<f64>,
    #[serde(rename = "W_v")]
    w_v: Vec<Vec<f64>>,
    b_v: Vec<f64>,
}

fn rows(flat: &[f64], cols: usize) -> Vec<Vec<f64>> {
    flat.chunks(cols).map(<[f64]>::to_vec).collect()
}

impl Serialize for PolicyParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsRepr {
            w1: rows(&self.w1, self.obs_dim),
            b1: self.b1.clone(),
            w2: rows(&self.w2, HIDDEN),
            b2: self.b2.clone(),
            w_mu: rows(&self.w_mu, HIDDEN),
            b_mu: self.b_mu.clone(),
            log_std: self.log_std.clone(),
            w_v: rows(&self.w_v, HIDDEN),
            b_v: self.b_v.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolicyParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ParamsRepr::deserialize(d)?;
        let obs_dim = r.w1.first().map_or(0, Vec::len);
        let flatten = |m: Vec<Vec<f64>>, cols: usize, name: &str| {
            if m.iter().any(|row| row.len() != cols) {
                return Err(D::Error::custom(format!("{name} has ragged rows")));
            }
            Ok(m.into_iter().flatten().collect::<Vec<_>>())
        };
        let p = PolicyParams {
            obs_dim,
            w1: flatten(r.w1, obs_dim, "W1")?,
            b1: r.b1,
            w2: flatten(r.w2, HIDDEN, "W2")?,
            b2: r.b2,
            w_mu: flatten(r.w_mu, HIDDEN, "W_mu")?,
            b_mu: r.b_mu,
            log_std: r.log_std,
            w_v: flatten(r.w_v, HIDDEN, "W_v")?,
            b_v: r.b_v,
        };
        p.check_shapes().map_err(D::Error::custom)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_stated_constants() {
        let a = init_params(33, 4);
        assert_eq!(a, init_params(33, 4));
        assert_ne!(a, init_params(33, 5));
        for b in [&a.b1, &a.b2, &a.b_mu, &a.b_v] {
            assert!(b.iter().all(|v| *v == 0.0));
        }
        assert_eq!(a.log_std, vec![-0.5; 3]);
        a.check_shapes().unwrap();
        assert_eq!(a.num_params(), 128 * 33 + 128 + 128 * 128 + 128 + 3 * 128 + 3 + 3 + 128 + 1);
    }

    #[test]
    fn xavier_bound_holds() {
        for seed in 0..10 {
            let p = init_params(33, seed);
            let s = (6.0f64 / (33.0 + 128.0)).sqrt();
            assert!(p.w1.iter().all(|w| w.abs() <= s));
            let s2 = (6.0f64 / 256.0).sqrt();
            assert!(p.w2.iter().all(|w| w.abs() <= s2));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = PolicyParams::zeros(7);
        let f = forward(&p, &[1.0; 7]).unwrap();
        assert_eq!(f.mu, [0.0; 3]);
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn hidden_units_saturate_below_one() {
        let mut p = PolicyParams::zeros(4);
        p.b1.fill(50.0);
        let f = forward(&p, &[0.0; 4]).unwrap();
        assert!(f.h1.iter().all(|h| *h <= 1.0 && *h == 50.0f64.tanh()));
    }

    #[test]
    fn wrong_observation_length() {
        let p = PolicyParams::zeros(4);
        assert!(matches!(forward(&p, &[0.0; 5]), Err(Error::Shape(_))));
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }

    #[test]
    fn checkpoint_layout_round_trip() {
        let p = init_params(9, 1);
        let text = serde_json::to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for name in TENSOR_NAMES {
            assert!(v.get(name).is_some(), "{name}");
        }
        assert_eq!(v["W1"].as_array().unwrap().len(), 128);
        assert_eq!(v["W1"][0].as_array().unwrap().len(), 9);
        assert_eq!(v["W_v"].as_array().unwrap().len(), 1);
        let back: PolicyParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
