//! Urban aerial mobility reinforcement-learning simulator.
//!
//! - [`world`] and [`env`]: procedural city, kinematic drone, rewards.
//! - [`vec_env`]: batches of independently seeded environments.
//! - [`ppo`]: actor-critic MLP with hand-written backprop and a PPO trainer.
//! - [`viz`]: trajectory CSV, top-down SVG, reward curves and OBJ scene export.
//! - [`comm`]: length-prefixed JSON protocol and TCP server hosting a batch.

pub mod comm;
pub mod env;
pub mod error;
pub mod geometry;
pub mod ppo;
pub mod vec_env;
pub mod viz;
pub mod world;

pub use env::{Action, EnvConfig, Observation, RewardBreakdown, Termination, UamState};
pub use error::{Error, Result};
pub use geometry::{BuildingBox, Vec3};
pub use vec_env::VecEnv;
pub use world::{generate_world, GenConfig, World};
