//! Policy evaluation episodes with full trajectory capture.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{forward, PolicyParams};
use super::policy::sample_action;
use crate::env::{self, Action, EnvConfig, Termination};
use crate::error::{Error, Result};
use crate::vec_env::EpisodeSummary;
use crate::viz::TrajectoryRecord;
use crate::world::World;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEpisode {
    pub summary: EpisodeSummary,
    pub trajectory: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalSummary {
    pub episodes: usize,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub mean_reward: f64,
}

/// Runs `episodes` full episodes. With `deterministic` the mean action is
/// taken; otherwise actions are sampled from the behavior mixture.
pub fn evaluate(
    params: &PolicyParams,
    world: &World,
    cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    deterministic: bool,
    explore_eps: f64,
) -> Result<Vec<EvalEpisode>> {
    if cfg.obs_dim() != params.obs_dim {
        return Err(Error::Shape(format!(
            "environment obs_dim {} differs from checkpoint obs_dim {}",
            cfg.obs_dim(),
            params.obs_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let (mut state, mut obs) = env::reset(world, cfg, rng.next_u64())?;
        let mut trajectory = vec![TrajectoryRecord::initial(&state, cfg.dt)];
        let mut total_reward = 0.0;
        loop {
            let fwd = forward(params, obs.as_slice())?;
            let command = if deterministic {
                fwd.mu
            } else {
                sample_action(&fwd.mu, &fwd.log_std, explore_eps, &mut rng).0
            };
            let action = Action::from(command);
            let step = env::step(&state, action, world, cfg);
            total_reward += step.reward.total;
            trajectory.push(TrajectoryRecord::from_state(
                &step.state,
                cfg.dt,
                action,
                step.reward,
                step.termination,
            ));
            if step.termination.is_terminal() {
                out.push(EvalEpisode {
                    summary: EpisodeSummary {
                        total_reward,
                        length: step.state.step_index,
                        termination: step.termination,
                    },
                    trajectory,
                });
                break;
            }
            state = step.state;
            obs = step.observation;
        }
    }
    Ok(out)
}

pub fn summarize(episodes: &[EpisodeSummary]) -> EvalSummary {
    if episodes.is_empty() {
        return EvalSummary::default();
    }
    let n = episodes.len() as f64;
    let count = |t: Termination| episodes.iter().filter(|e| e.termination == t).count() as f64 / n;
    EvalSummary {
        episodes: episodes.len(),
        goal_rate: count(Termination::GoalReached),
        collision_rate: count(Termination::Collision),
        mean_reward: episodes.iter().map(|e| e.total_reward).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::init_params;
    use crate::viz::validate_trajectory;
    use crate::world::{generate_world, GenConfig};

    #[test]
    fn episodes_terminate_with_valid_trajectories() {
        let world = generate_world(&GenConfig::default(), 4).unwrap();
        let cfg = EnvConfig {
            max_steps: 60,
            ..EnvConfig::default()
        };
        let params = init_params(cfg.obs_dim(), 1);
        let eps = evaluate(&params, &world, &cfg, 3, 9, false, 0.2).unwrap();
        assert_eq!(eps.len(), 3);
        for e in &eps {
            validate_trajectory(&e.trajectory).unwrap();
            assert!(e.summary.length <= 60);
            assert_eq!(e.trajectory.len(), e.summary.length as usize + 1);
            let sum: f64 = e.trajectory.iter().map(|r| r.reward).sum();
            assert!((sum - e.summary.total_reward).abs() < 1e-9);
        }
        assert_eq!(eps, evaluate(&params, &world, &cfg, 3, 9, false, 0.2).unwrap());
    }

    #[test]
    fn zero_episodes_give_empty_summary() {
        let world = generate_world(&GenConfig::default(), 4).unwrap();
        let cfg = EnvConfig::default();
        let params = init_params(cfg.obs_dim(), 1);
        let eps = evaluate(&params, &world, &cfg, 0, 9, true, 0.0).unwrap();
        assert!(eps.is_empty());
        assert_eq!(summarize(&[]), EvalSummary::default());
    }

    #[test]
    fn obs_dim_mismatch_is_rejected() {
        let world = generate_world(&GenConfig::default(), 4).unwrap();
        let params = init_params(10, 1);
        assert!(matches!(
            evaluate(&params, &world, &EnvConfig::default(), 1, 0, true, 0.0),
            Err(Error::Shape(_))
        ));
    }
}
