//! A batch of independent environments, each owning its PRNG stream.
//!
//! Stream `i` is seeded with `master_seed ^ i`, so a batch produces the same
//! results whether its slots are stepped sequentially or on worker threads.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{self, Action, EnvConfig, Observation, RewardBreakdown, Termination, UamState};
use crate::error::{Error, Result};
use crate::world::World;

/// Seed of the per-environment stream `index` under `master_seed`.
pub fn stream_seed(master_seed: u64, index: usize) -> u64 {
    master_seed ^ index as u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub total_reward: f64,
    pub length: u32,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvTransition {
    /// Observation after the step; the reset observation when `done`.
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub termination: Termination,
    pub done: bool,
    /// Present when this step ended an episode.
    pub episode: Option<EpisodeSummary>,
}

#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub(crate) rng: ChaCha8Rng,
    state: UamState,
    observation: Observation,
    episode_return: f64,
}

impl EnvSlot {
    fn start(world: &World, cfg: &EnvConfig, seed: u64) -> Result<Self> {
        let mut slot = EnvSlot {
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: UamState::default(),
            observation: Observation(Vec::new()),
            episode_return: 0.0,
        };
        slot.reset(world, cfg)?;
        Ok(slot)
    }

    /// Starts a new episode with a reset seed drawn from this slot's stream.
    fn reset(&mut self, world: &World, cfg: &EnvConfig) -> Result<()> {
        let (state, obs) = env::reset(world, cfg, self.rng.next_u64())?;
        self.state = state;
        self.observation = obs;
        self.episode_return = 0.0;
        Ok(())
    }

    pub fn state(&self) -> &UamState {
        &self.state
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    /// Steps the environment, auto-resetting on terminal states.
    pub fn step(&mut self, action: Action, world: &World, cfg: &EnvConfig) -> Result<EnvTransition> {
        let out = env::step(&self.state, action, world, cfg);
        self.episode_return += out.reward.total;
        let done = out.termination.is_terminal();
        if done {
            let episode = EpisodeSummary {
                total_reward: self.episode_return,
                length: out.state.step_index,
                termination: out.termination,
            };
            self.reset(world, cfg)?;
            Ok(EnvTransition {
                observation: self.observation.clone(),
                reward: out.reward,
                termination: out.termination,
                done,
                episode: Some(episode),
            })
        } else {
            self.state = out.state;
            self.observation = out.observation.clone();
            Ok(EnvTransition {
                observation: out.observation,
                reward: out.reward,
                termination: out.termination,
                done,
                episode: None,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct VecEnv {
    world: Arc<World>,
    cfg: EnvConfig,
    slots: Vec<EnvSlot>,
}

impl VecEnv {
    pub fn new(world: Arc<World>, cfg: EnvConfig, n_envs: usize, master_seed: u64) -> Result<Self> {
        cfg.validate()?;
        if n_envs == 0 {
            return Err(Error::Config("n_envs must be at least 1".into()));
        }
        let slots = (0..n_envs)
            .map(|i| EnvSlot::start(&world, &cfg, stream_seed(master_seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { world, cfg, slots })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[EnvSlot] {
        &self.slots
    }

    /// World, config and mutable slots, for stepping slots on worker threads.
    pub(crate) fn split_mut(&mut self) -> (&World, &EnvConfig, &mut [EnvSlot]) {
        (&self.world, &self.cfg, &mut self.slots)
    }

    /// Re-seeds every stream from `seed` and starts fresh episodes.
    pub fn reset_all(&mut self, seed: u64) -> Result<Vec<Observation>> {
        let (world, cfg) = (&self.world, &self.cfg);
        for (i, slot) in self.slots.iter_mut().enumerate() {
            *slot = EnvSlot::start(world, cfg, stream_seed(seed, i))?;
        }
        Ok(self.observations())
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.slots.iter().map(|s| s.observation.clone()).collect()
    }

    /// Applies action `i` to environment `i`.
    pub fn step_all(&mut self, actions: &[Action]) -> Result<Vec<EnvTransition>> {
        if actions.len() != self.slots.len() {
            return Err(Error::Shape(format!(
                "expected {} actions, got {}",
                self.slots.len(),
                actions.len()
            )));
        }
        let (world, cfg) = (&self.world, &self.cfg);
        self.slots
            .iter_mut()
            .zip(actions)
            .map(|(slot, a)| slot.step(*a, world, cfg))
            .collect()
    }
}
