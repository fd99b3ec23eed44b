mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use uam_sim::ppo::{
    compute_gae, forward, init_params, normalize, rollout, train, Checkpoint, PpoHyper, PpoLearner,
    TrainConfig, LOG_STD_MAX, LOG_STD_MIN,
};
use uam_sim::{generate_world, EnvConfig, GenConfig, VecEnv, World};

fn small_world() -> Arc<World> {
    Arc::new(generate_world(&GenConfig::default(), 9).unwrap())
}

#[test]
fn forward_matches_naive_loops() {
    let mut rng = rng(21);
    let obs_dim = EnvConfig::default().obs_dim();
    for _ in 0..100 {
        let params = random_params(&mut rng, obs_dim);
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fwd = forward(&params, &obs).unwrap();
        let (mu, value) = naive_forward(&params, &obs);
        for k in 0..3 {
            assert!((fwd.mu[k] - mu[k]).abs() <= 1e-12);
            assert_eq!(fwd.log_std[k], params.log_std[k]);
        }
        assert!((fwd.value - value).abs() <= 1e-12);
    }
}

#[test]
fn forward_rejects_wrong_obs_length() {
    let params = init_params(33, 0);
    assert!(forward(&params, &[0.0; 32]).is_err());
}

#[test]
fn gae_matches_double_sum() {
    let mut rng = rng(8);
    for _ in 0..200 {
        let n = rng.random_range(1..=16);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let bootstrap = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.8..1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda).unwrap();
        let want = brute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
        for t in 0..n {
            assert!((adv[t] - want[t]).abs() <= 1e-10, "t={t}: {} vs {}", adv[t], want[t]);
            assert!((ret[t] - (want[t] + values[t])).abs() <= 1e-10);
        }
    }
}

#[test]
fn backprop_matches_finite_differences() {
    let report = gradient_check(7, 10, 50);
    assert_eq!(report.checked, 500);
    assert_eq!(report.failures, 0, "worst relative error {:e}", report.worst_rel);
}

fn identity_first_minibatch(explore_eps: f64) -> uam_sim::ppo::LossStats {
    let hyper = PpoHyper {
        explore_eps,
        n_envs: 4,
        horizon: 64,
        minibatch_size: 64,
        ..PpoHyper::default()
    };
    let mut envs = VecEnv::new(small_world(), EnvConfig::default(), hyper.n_envs, 5).unwrap();
    let mut learner = PpoLearner::new(init_params(envs.obs_dim(), 3));
    let mut buf = rollout(&learner.params, &mut envs, hyper.horizon, explore_eps, true).unwrap();
    buf.finalize(hyper.gamma, hyper.lambda).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    learner.update(&buf, &hyper, &mut rng).unwrap().first_minibatch
}

#[test]
fn unchanged_params_give_unit_ratios() {
    for eps in [0.0, 0.1] {
        let first = identity_first_minibatch(eps);
        assert!(first.max_ratio_deviation <= 1e-12, "{}", first.max_ratio_deviation);
        assert_eq!(first.clip_frac, 0.0);
    }
}

#[test]
fn parallel_rollout_is_bitwise_sequential() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let params = init_params(EnvConfig::default().obs_dim(), 1);
    let make = || VecEnv::new(small_world(), EnvConfig::default(), 8, 77).unwrap();
    let mut seq_envs = make();
    let mut par_envs = make();
    for _ in 0..3 {
        let seq = rollout(&params, &mut seq_envs, 64, 0.1, false).unwrap();
        let par = pool.install(|| rollout(&params, &mut par_envs, 64, 0.1, true).unwrap());
        let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&seq.observations), bits(&par.observations));
        assert_eq!(bits(&seq.rewards), bits(&par.rewards));
        assert_eq!(bits(&seq.log_probs), bits(&par.log_probs));
        assert_eq!(bits(&seq.values), bits(&par.values));
        assert_eq!(seq.actions, par.actions);
        assert_eq!(seq.dones, par.dones);
        assert_eq!(seq.episodes, par.episodes);
    }
}

#[test]
fn all_done_environment_trains() {
    let cfg = EnvConfig {
        max_steps: 1,
        ..EnvConfig::default()
    };
    let mut envs = VecEnv::new(small_world(), cfg, 4, 2).unwrap();
    let mut learner = PpoLearner::new(init_params(envs.obs_dim(), 0));
    let mut buf = rollout(&learner.params, &mut envs, 16, 0.0, false).unwrap();
    assert!(buf.dones.iter().all(|d| *d));
    assert_eq!(buf.episodes.len(), 64);
    buf.finalize(0.99, 0.95).unwrap();
    for (r, ret) in buf.rewards.iter().zip(&buf.returns) {
        assert!((r - ret).abs() <= 1e-12);
    }
    let hyper = PpoHyper {
        minibatch_size: 16,
        ..PpoHyper::default()
    };
    let stats = learner.update(&buf, &hyper, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(stats.policy_loss.is_finite() && stats.value_loss.is_finite());
}

fn tiny_train_config(out: &std::path::Path) -> TrainConfig {
    TrainConfig {
        hyper: PpoHyper {
            n_envs: 4,
            horizon: 32,
            total_env_steps: 4 * 32 * 3,
            minibatch_size: 64,
            ..PpoHyper::default()
        },
        seed: 42,
        out_dir: Some(out.to_path_buf()),
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train(&tiny_train_config(a.path())).unwrap();
    let mut second = tiny_train_config(b.path());
    second.parallel = false;
    train(&second).unwrap();
    for name in ["metrics.csv", "checkpoint_final.json", "world.json", "eval_trajectory.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let ckpt = Checkpoint::load(a.path().join("checkpoint_final.json")).unwrap();
    assert_eq!(ckpt.env_steps, 4 * 32 * 3);
}

proptest! {
    #[test]
    fn normalized_advantages_are_standardized(xs in prop::collection::vec(-100.0f64..100.0, 2..200)) {
        let mut ys = xs.clone();
        normalize(&mut ys);
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() <= 1e-10);
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 1e-6 {
            prop_assert!((std - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn log_std_stays_bounded(start in prop::array::uniform3(-8.0f64..8.0), lr in 1e-3f64..1.0) {
        let hyper = PpoHyper { n_envs: 2, horizon: 16, minibatch_size: 16, lr, entropy_coef: 1.0, ..PpoHyper::default() };
        let mut envs = VecEnv::new(small_world(), EnvConfig::default(), 2, 1).unwrap();
        let mut params = init_params(envs.obs_dim(), 0);
        params.log_std = start.to_vec();
        params.clamp_log_std();
        let mut learner = PpoLearner::new(params);
        let mut buf = rollout(&learner.params, &mut envs, 16, 0.0, false).unwrap();
        buf.finalize(0.99, 0.95).unwrap();
        learner.update(&buf, &hyper, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        prop_assert!(learner.params.log_std.iter().all(|l| (LOG_STD_MIN..=LOG_STD_MAX).contains(l)));
    }
}
