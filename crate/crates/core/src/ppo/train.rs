//! The rollout -> GAE -> update loop, with metrics and checkpoint files.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::rollout;
use super::eval::evaluate;
use super::network::{init_params, PolicyParams};
use super::update::PpoLearner;
use super::PpoHyper;
use crate::env::{EnvConfig, Termination};
use crate::error::{Error, Result};
use crate::vec_env::{EpisodeSummary, VecEnv};
use crate::viz::{csv_error, write_trajectory, TrajectoryRecord};
use crate::world::{generate_world, GenConfig, World};

pub const METRICS_HEADER: &str =
    "update,env_steps,mean_ep_reward,std_ep_reward,goal_rate,collision_rate,policy_loss,value_loss,entropy,clip_frac";

/// One row of the metrics file. Episode statistics cover the most recent
/// completed episodes (see [`TrainConfig::reward_window`]) and are NaN until
/// the first episode finishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub update: u64,
    pub env_steps: u64,
    pub mean_ep_reward: f64,
    pub std_ep_reward: f64,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorldSource {
    Generate(GenConfig),
    File(PathBuf),
    Given(World),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub world: WorldSource,
    pub hyper: PpoHyper,
    pub seed: u64,
    /// Where metrics, checkpoints and the evaluation trajectory go; nothing
    /// is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint period in updates; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    /// Number of recent episodes behind the episode statistics.
    pub reward_window: usize,
    /// Collect environment rows on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            world: WorldSource::Generate(GenConfig::default()),
            hyper: PpoHyper::default(),
            seed: 0,
            out_dir: None,
            checkpoint_every: 0,
            reward_window: 100,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub obs_dim: usize,
    pub hyper: PpoHyper,
    pub seed: u64,
    pub env_steps: u64,
    pub params: PolicyParams,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.params.obs_dim != ckpt.obs_dim {
            return Err(Error::Shape(format!(
                "checkpoint declares obs_dim {} but W1 has {} columns",
                ckpt.obs_dim, ckpt.params.obs_dim
            )));
        }
        Ok(ckpt)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingArtifacts {
    pub world: World,
    pub params: PolicyParams,
    pub env_steps: u64,
    pub metrics: Vec<TrainMetrics>,
    pub checkpoints: Vec<PathBuf>,
    /// Deterministic-policy episode run after training.
    pub trajectory: Vec<TrajectoryRecord>,
    /// Set when training halted on a non-finite loss; artifacts then hold
    /// the last good parameters.
    pub divergence: Option<String>,
}

struct Seeds {
    init: u64,
    envs: u64,
    updates: u64,
    eval: u64,
}

impl Seeds {
    fn derive(seed: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        Seeds {
            init: master.next_u64(),
            envs: master.next_u64(),
            updates: master.next_u64(),
            eval: master.next_u64(),
        }
    }
}

fn window_stats(window: &VecDeque<EpisodeSummary>) -> (f64, f64, f64, f64) {
    if window.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let n = window.len() as f64;
    let mean = window.iter().map(|e| e.total_reward).sum::<f64>() / n;
    let var = window
        .iter()
        .map(|e| (e.total_reward - mean) * (e.total_reward - mean))
        .sum::<f64>()
        / n;
    let rate = |t: Termination| window.iter().filter(|e| e.termination == t).count() as f64 / n;
    (
        mean,
        var.sqrt(),
        rate(Termination::GoalReached),
        rate(Termination::Collision),
    )
}

struct MetricsFile {
    writer: csv::Writer<fs::File>,
    path: PathBuf,
}

impl MetricsFile {
    fn create(path: PathBuf) -> Result<Self> {
        let file = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
        Ok(Self {
            writer: csv::Writer::from_writer(file),
            path,
        })
    }

    fn append(&mut self, m: &TrainMetrics) -> Result<()> {
        self.writer
            .serialize(m)
            .and_then(|_| self.writer.flush().map_err(csv::Error::from))
            .map_err(|e| Error::file(&self.path, std::io::Error::from(e)))
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<TrainMetrics>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_metrics(&text)
}

pub(crate) fn parse_metrics(text: &str) -> Result<Vec<TrainMetrics>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(e, 1))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{METRICS_HEADER}`"),
        });
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(e, 0)))
        .collect()
}

pub fn train(config: &TrainConfig) -> Result<TrainingArtifacts> {
    train_with_progress(config, |_| {})
}

/// Trains until `total_env_steps` is reached, calling `progress` after each update.
pub fn train_with_progress(
    config: &TrainConfig,
    mut progress: impl FnMut(&TrainMetrics),
) -> Result<TrainingArtifacts> {
    let hyper = &config.hyper;
    hyper.validate()?;
    config.env.validate()?;
    let world = match &config.world {
        WorldSource::Generate(gen) => generate_world(gen, config.seed)?,
        WorldSource::File(path) => World::load(path)?,
        WorldSource::Given(world) => {
            world.validate()?;
            world.clone()
        }
    };
    let world = Arc::new(world);
    let seeds = Seeds::derive(config.seed);
    let obs_dim = config.env.obs_dim();

    let mut metrics_file = match &config.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
            world.save(dir.join("world.json"))?;
            Some(MetricsFile::create(dir.join("metrics.csv"))?)
        }
        None => None,
    };

    let mut envs = VecEnv::new(world.clone(), config.env.clone(), hyper.n_envs, seeds.envs)?;
    let mut learner = PpoLearner::new(init_params(obs_dim, seeds.init));
    let mut update_rng = ChaCha8Rng::seed_from_u64(seeds.updates);
    let mut window: VecDeque<EpisodeSummary> = VecDeque::with_capacity(config.reward_window);
    let mut env_steps = 0u64;
    let mut update = 0u64;
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let mut divergence = None;

    let checkpoint = |params: &PolicyParams, env_steps: u64, name: String| -> Result<Option<PathBuf>> {
        let Some(dir) = &config.out_dir else {
            return Ok(None);
        };
        let path = dir.join(name);
        Checkpoint {
            obs_dim,
            hyper: hyper.clone(),
            seed: config.seed,
            env_steps,
            params: params.clone(),
        }
        .save(&path)?;
        Ok(Some(path))
    };

    while env_steps < hyper.total_env_steps {
        let mut buffer = rollout(&learner.params, &mut envs, hyper.horizon, hyper.explore_eps, config.parallel)?;
        buffer.finalize(hyper.gamma, hyper.lambda)?;
        let stats = match learner.update(&buffer, hyper, &mut update_rng) {
            Ok(stats) => stats,
            Err(Error::NumericalDivergence(msg)) => {
                divergence = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        env_steps += hyper.steps_per_update();
        update += 1;
        for ep in &buffer.episodes {
            if window.len() == config.reward_window {
                window.pop_front();
            }
            if config.reward_window > 0 {
                window.push_back(*ep);
            }
        }
        let (mean, std, goal_rate, collision_rate) = window_stats(&window);
        let record = TrainMetrics {
            update,
            env_steps,
            mean_ep_reward: mean,
            std_ep_reward: std,
            goal_rate,
            collision_rate,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_frac: stats.clip_frac,
        };
        if let Some(file) = metrics_file.as_mut() {
            file.append(&record)?;
        }
        progress(&record);
        metrics.push(record);
        if config.checkpoint_every > 0 && update % config.checkpoint_every == 0 {
            checkpoints.extend(checkpoint(&learner.params, env_steps, format!("checkpoint_{update:06}.json"))?);
        }
    }
    checkpoints.extend(checkpoint(&learner.params, env_steps, "checkpoint_final.json".into())?);

    let eval = evaluate(&learner.params, &world, &config.env, 1, seeds.eval, true, 0.0)?;
    let trajectory = eval.into_iter().next().map(|e| e.trajectory).unwrap_or_default();
    if let Some(dir) = &config.out_dir {
        write_trajectory(&trajectory, dir.join("eval_trajectory.csv"))?;
    }

    Ok(TrainingArtifacts {
        world: (*world).clone(),
        params: learner.params,
        env_steps,
        metrics,
        checkpoints,
        trajectory,
        divergence,
    })
}
