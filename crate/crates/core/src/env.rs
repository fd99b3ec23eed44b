//! Kinematic UAM environment: dynamics, observation, reward and termination.
//!
//! Every operation is a pure function of its arguments; randomness only
//! enters through the seed handed to [`reset`].

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitBall};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clearance, point_in_box, Vec3};
use crate::world::{World, MAX_PLACEMENT_ATTEMPTS};

/// Number of leading observation entries before the building records.
pub const OBS_BASE_DIM: usize = 13;
/// Values per nearest-building record.
pub const OBS_BUILDING_DIM: usize = 4;
pub const ACTION_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Integration step in seconds.
    pub dt: f64,
    /// Acceleration at full command, m/s^2.
    pub a_max: f64,
    /// Linear drag rate, 1/s.
    pub drag: f64,
    /// Yaw alignment rate, 1/s.
    pub yaw_lag: f64,
    pub max_steps: u32,
    /// Number of nearest buildings in the observation.
    pub k_nearest: usize,
    pub r_goal: f64,
    pub k_progress: f64,
    pub d_safe: f64,
    pub k_proximity: f64,
    pub r_collision: f64,
    pub r_out: f64,
    pub pos_scale: f64,
    pub vel_scale: f64,
    pub alt_scale: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            a_max: 5.0,
            drag: 0.3,
            yaw_lag: 2.0,
            max_steps: 500,
            k_nearest: 5,
            r_goal: 10.0,
            k_progress: 1.0,
            d_safe: 5.0,
            k_proximity: 0.5,
            r_collision: -10.0,
            r_out: -10.0,
            pos_scale: 50.0,
            vel_scale: 10.0,
            alt_scale: 60.0,
        }
    }
}

impl EnvConfig {
    pub fn obs_dim(&self) -> usize {
        OBS_BASE_DIM + OBS_BUILDING_DIM * self.k_nearest
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.dt > 0.0, "dt must be positive"),
            (self.a_max > 0.0, "a_max must be positive"),
            (self.drag >= 0.0 && self.drag * self.dt < 1.0, "drag must satisfy 0 <= drag*dt < 1"),
            (self.yaw_lag >= 0.0, "yaw_lag must be non-negative"),
            (self.max_steps >= 1, "max_steps must be at least 1"),
            (self.d_safe > 0.0, "d_safe must be positive"),
            (self.r_goal >= 0.0, "r_goal must be non-negative"),
            (self.k_proximity >= 0.0, "k_proximity must be non-negative"),
            (self.r_collision <= 0.0, "r_collision must be non-positive"),
            (self.r_out <= 0.0, "r_out must be non-positive"),
            (self.pos_scale > 0.0, "pos_scale must be positive"),
            (self.vel_scale > 0.0, "vel_scale must be positive"),
            (self.alt_scale > 0.0, "alt_scale must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config(msg.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UamState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Heading in [-pi, pi).
    pub yaw: f64,
    pub yaw_rate: f64,
    pub step_index: u32,
}

impl UamState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    pub fn angular_velocity(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.yaw_rate)
    }
}

/// Normalized acceleration command. Components outside [-1, 1] are clamped by [`step`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub command: Vec3,
}

impl Action {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            command: Vec3::new(x, y, z),
        }
    }

    pub fn clamped(self) -> Vec3 {
        self.command.map(|c| c.clamp(-1.0, 1.0))
    }
}

impl From<[f64; 3]> for Action {
    fn from(a: [f64; 3]) -> Self {
        Action { command: a.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub goal_arrival: f64,
    pub progress: f64,
    pub proximity: f64,
    pub collision: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    #[default]
    Running,
    GoalReached,
    Collision,
    OutOfBounds,
    Timeout,
}

impl Termination {
    pub const ALL: [Termination; 5] = [
        Termination::Running,
        Termination::GoalReached,
        Termination::Collision,
        Termination::OutOfBounds,
        Termination::Timeout,
    ];

    pub fn is_terminal(self) -> bool {
        self != Termination::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Running => "running",
            Termination::GoalReached => "goal_reached",
            Termination::Collision => "collision",
            Termination::OutOfBounds => "out_of_bounds",
            Termination::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Termination> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: UamState,
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub termination: Termination,
}

/// Wraps an angle to [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = a - two_pi * ((a + PI) / two_pi).floor();
    // Rounding can land exactly on +pi.
    if w >= PI {
        w - two_pi
    } else {
        w
    }
}

/// Samples a start state in the spawn sphere, outside buildings and inside bounds.
pub fn reset(world: &World, cfg: &EnvConfig, seed: u64) -> Result<(UamState, Observation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let [ux, uy, uz]: [f64; 3] = UnitBall.sample(&mut rng);
        let offset = Vec3::new(ux, uy, uz) * world.spawn_radius;
        let position = world.spawn_center + offset;
        if point_in_box(position, &world.bounds) && !world.inside_any_building(position) {
            let state = UamState::at_rest(position);
            let obs = observe(&state, world, cfg);
            return Ok((state, obs));
        }
    }
    Err(Error::GenerationFailed(format!(
        "no valid spawn position after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// Advances one semi-implicit Euler step and scores the transition.
pub fn step(state: &UamState, action: Action, world: &World, cfg: &EnvConfig) -> StepOutcome {
    let next = integrate(state, action, cfg);
    let termination = check_termination(&next, world, cfg);
    let reward = compute_reward(state, &next, world, cfg, termination);
    let observation = observe(&next, world, cfg);
    StepOutcome {
        state: next,
        observation,
        reward,
        termination,
    }
}

fn integrate(state: &UamState, action: Action, cfg: &EnvConfig) -> UamState {
    let accel = action.clamped() * cfg.a_max;
    let velocity = (state.velocity + accel * cfg.dt) * (1.0 - cfg.drag * cfg.dt);
    let mut position = state.position + velocity * cfg.dt;
    position.z = position.z.max(0.0);

    let target_yaw = if velocity.x.hypot(velocity.y) > 1e-6 {
        velocity.y.atan2(velocity.x)
    } else {
        state.yaw
    };
    let raw_yaw = state.yaw + cfg.yaw_lag * cfg.dt * wrap_angle(target_yaw - state.yaw);
    let yaw = wrap_angle(raw_yaw);
    let yaw_rate = wrap_angle(yaw - state.yaw) / cfg.dt;

    UamState {
        position,
        velocity,
        yaw,
        yaw_rate,
        step_index: state.step_index + 1,
    }
}

/// Indices of the `k` buildings nearest to `p` by center distance,
/// ascending, ties broken by list index.
pub fn nearest_buildings(p: Vec3, world: &World, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(f64, usize)> = world
        .buildings
        .iter()
        .enumerate()
        .map(|(i, b)| (b.center.distance(p), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < ranked.len() {
        if k > 0 {
            ranked.select_nth_unstable_by(k - 1, cmp);
        }
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(cmp);
    ranked.into_iter().map(|(_, i)| i).collect()
}

pub fn observe(state: &UamState, world: &World, cfg: &EnvConfig) -> Observation {
    let mut obs = Vec::with_capacity(cfg.obs_dim());
    let pos = state.position * (1.0 / cfg.pos_scale);
    let goal = world.goal_center * (1.0 / cfg.pos_scale);
    let vel = state.velocity * (1.0 / cfg.vel_scale);
    obs.extend(pos.to_array());
    obs.extend(goal.to_array());
    obs.extend(vel.to_array());
    obs.extend(state.angular_velocity().to_array());
    obs.push(state.position.z / cfg.alt_scale);

    let nearest = nearest_buildings(state.position, world, cfg.k_nearest);
    for &i in &nearest {
        let b = &world.buildings[i];
        let rel = (b.center - state.position) * (1.0 / cfg.pos_scale);
        obs.extend(rel.to_array());
        obs.push(b.horizontal_half_extent() / cfg.pos_scale);
    }
    obs.resize(cfg.obs_dim(), 0.0);
    Observation(obs)
}

pub fn compute_reward(
    prev: &UamState,
    next: &UamState,
    world: &World,
    cfg: &EnvConfig,
    term: Termination,
) -> RewardBreakdown {
    let goal_arrival = if term == Termination::GoalReached {
        cfg.r_goal
    } else {
        0.0
    };
    let d_prev = prev.position.distance(world.goal_center);
    let d_next = next.position.distance(world.goal_center);
    let progress = -cfg.k_progress * (d_next - d_prev);
    let c = clearance(next.position, &world.buildings);
    let proximity = if c.is_finite() {
        -cfg.k_proximity * (1.0 - c / cfg.d_safe).max(0.0)
    } else {
        0.0
    };
    let collision = match term {
        Termination::Collision => cfg.r_collision,
        Termination::OutOfBounds => cfg.r_out,
        _ => 0.0,
    };
    RewardBreakdown {
        goal_arrival,
        progress,
        proximity,
        collision,
        total: goal_arrival + progress + proximity + collision,
    }
}

/// Resolves terminal conditions with priority
/// goal > collision > out of bounds > timeout.
pub fn check_termination(state: &UamState, world: &World, cfg: &EnvConfig) -> Termination {
    let p = state.position;
    if p.distance(world.goal_center) <= world.goal_radius {
        Termination::GoalReached
    } else if world.inside_any_building(p) {
        Termination::Collision
    } else if !point_in_box(p, &world.bounds) {
        Termination::OutOfBounds
    } else if state.step_index >= cfg.max_steps {
        Termination::Timeout
    } else {
        Termination::Running
    }
}
