//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uam_sim::env::{Action, EnvConfig, UamState};
use uam_sim::ppo::{PolicyParams, HIDDEN};
use uam_sim::{BuildingBox, GenConfig, Vec3, World};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generated world with a random number of buildings (0..=max_buildings).
pub fn random_world(rng: &mut impl Rng, max_buildings: usize) -> World {
    let config = GenConfig {
        n_buildings: rng.random_range(0..=max_buildings),
        min_separation: 20.0,
        ..GenConfig::default()
    };
    uam_sim::generate_world(&config, rng.random()).expect("world generation")
}

pub fn random_point_in(rng: &mut impl Rng, world: &World, pad: f64) -> Vec3 {
    let lo = world.bounds.min();
    let hi = world.bounds.max();
    Vec3::new(
        rng.random_range(lo.x - pad..hi.x + pad),
        rng.random_range(lo.y - pad..hi.y + pad),
        rng.random_range(0.0..hi.z + pad),
    )
}

// ---------------------------------------------------------------- env oracles

fn wrap(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut w = a.rem_euclid(tau);
    if w >= std::f64::consts::PI {
        w -= tau;
    }
    w
}

/// Component-wise restatement of the semi-implicit Euler update.
pub fn reference_step(s: &UamState, a: [f64; 3], cfg: &EnvConfig) -> UamState {
    let p = s.position.to_array();
    let v = s.velocity.to_array();
    let mut nv = [0.0; 3];
    let mut np = [0.0; 3];
    for i in 0..3 {
        let acc = cfg.a_max * a[i].clamp(-1.0, 1.0);
        nv[i] = (v[i] + acc * cfg.dt) * (1.0 - cfg.drag * cfg.dt);
        np[i] = p[i] + nv[i] * cfg.dt;
    }
    if np[2] < 0.0 {
        np[2] = 0.0;
    }
    let horizontal = (nv[0] * nv[0] + nv[1] * nv[1]).sqrt();
    let target = if horizontal > 1e-6 { nv[1].atan2(nv[0]) } else { s.yaw };
    let yaw = wrap(s.yaw + cfg.yaw_lag * cfg.dt * wrap(target - s.yaw));
    UamState {
        position: np.into(),
        velocity: nv.into(),
        yaw,
        yaw_rate: wrap(yaw - s.yaw) / cfg.dt,
        step_index: s.step_index + 1,
    }
}

/// All building indices sorted by center distance with a stable sort.
pub fn brute_nearest(p: Vec3, world: &World, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..world.buildings.len()).collect();
    let dist = |i: usize| {
        let c = world.buildings[i].center;
        ((c.x - p.x).powi(2) + (c.y - p.y).powi(2) + (c.z - p.z).powi(2)).sqrt()
    };
    idx.sort_by(|a, b| dist(*a).partial_cmp(&dist(*b)).unwrap());
    idx.truncate(k);
    idx
}

/// Distance to the closest point of the box, found by clamping.
pub fn brute_box_distance(p: Vec3, b: &BuildingBox) -> f64 {
    let lo = b.min().to_array();
    let hi = b.max().to_array();
    let q = p.to_array();
    let mut sum = 0.0;
    for i in 0..3 {
        let c = q[i].max(lo[i]).min(hi[i]);
        sum += (q[i] - c) * (q[i] - c);
    }
    sum.sqrt()
}

pub fn brute_clearance(p: Vec3, world: &World) -> f64 {
    let mut best = f64::INFINITY;
    for b in &world.buildings {
        let d = brute_box_distance(p, b);
        if d < best {
            best = d;
        }
    }
    best
}

pub fn brute_inside_any(p: Vec3, world: &World) -> bool {
    world.buildings.iter().any(|b| {
        let (lo, hi) = (b.min(), b.max());
        lo.x <= p.x && p.x <= hi.x && lo.y <= p.y && p.y <= hi.y && lo.z <= p.z && p.z <= hi.z
    })
}

pub fn random_action(rng: &mut impl Rng) -> Action {
    Action::new(
        rng.random_range(-1.5..1.5),
        rng.random_range(-1.5..1.5),
        rng.random_range(-1.5..1.5),
    )
}

// ---------------------------------------------------------------- ppo oracles

/// Plain triple-loop forward pass returning (mu, value).
pub fn naive_forward(p: &PolicyParams, obs: &[f64]) -> ([f64; 3], f64) {
    let n = p.obs_dim;
    let mut h1 = vec![0.0; HIDDEN];
    for j in 0..HIDDEN {
        let mut s = p.b1[j];
        for i in 0..n {
            s += p.w1[j * n + i] * obs[i];
        }
        h1[j] = s.tanh();
    }
    let mut h2 = vec![0.0; HIDDEN];
    for j in 0..HIDDEN {
        let mut s = p.b2[j];
        for i in 0..HIDDEN {
            s += p.w2[j * HIDDEN + i] * h1[i];
        }
        h2[j] = s.tanh();
    }
    let mut mu = [0.0; 3];
    for (k, m) in mu.iter_mut().enumerate() {
        let mut s = p.b_mu[k];
        for i in 0..HIDDEN {
            s += p.w_mu[k * HIDDEN + i] * h2[i];
        }
        *m = s;
    }
    let mut v = p.b_v[0];
    for i in 0..HIDDEN {
        v += p.w_v[i] * h2[i];
    }
    (mu, v)
}

/// `A_t = sum_k (gamma*lambda)^(k-t) * delta_k`, truncated at the first done.
pub fn brute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let value_at = |t: usize| if t == n { bootstrap } else { values[t] };
    let delta = |k: usize| {
        let mask = if dones[k] { 0.0 } else { 1.0 };
        rewards[k] + gamma * value_at(k + 1) * mask - values[k]
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                let alive = (t..k).all(|j| !dones[j]);
                if !alive {
                    break;
                }
                total += (gamma * lambda).powi((k - t) as i32) * delta(k);
            }
            total
        })
        .collect()
}

pub fn random_params(rng: &mut impl Rng, obs_dim: usize) -> PolicyParams {
    let mut p = uam_sim::ppo::init_params(obs_dim, rng.random());
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    for v in &mut p.log_std {
        *v = rng.random_range(-1.0..0.3);
    }
    p
}

/// A minibatch around the current policy with perturbed old log-probs so
/// that some samples sit on the clipped branch.
pub fn random_minibatch(
    rng: &mut impl Rng,
    params: &PolicyParams,
    n: usize,
    explore_eps: f64,
) -> uam_sim::ppo::Minibatch {
    use rand_distr::{Distribution, StandardNormal};
    let obs_dim = params.obs_dim;
    let mut mb = uam_sim::ppo::Minibatch {
        obs_dim,
        observations: Vec::with_capacity(n * obs_dim),
        actions: Vec::with_capacity(n),
        old_log_probs: Vec::with_capacity(n),
        advantages: Vec::with_capacity(n),
        returns: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fwd = uam_sim::ppo::forward(params, &obs).unwrap();
        let (action, logp) = uam_sim::ppo::sample_action(&fwd.mu, &fwd.log_std, explore_eps, rng);
        let noise: f64 = StandardNormal.sample(rng);
        mb.observations.extend(obs);
        mb.actions.push(action);
        mb.old_log_probs.push(logp + 0.3 * noise);
        mb.advantages.push(StandardNormal.sample(rng));
        mb.returns.push(StandardNormal.sample(rng));
    }
    mb
}

pub struct GradCheck {
    pub checked: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

/// Compares backprop against central differences on `coords_per_batch`
/// random coordinates for each of `batches` random minibatches. Half of the
/// minibatches use a uniform exploration mixture.
pub fn gradient_check(seed: u64, batches: usize, coords_per_batch: usize) -> GradCheck {
    use uam_sim::ppo::{evaluate_loss, loss_and_gradient, PpoHyper};
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let mut rng = rng(seed);
    let obs_dim = uam_sim::EnvConfig::default().obs_dim();
    let mut report = GradCheck {
        checked: 0,
        failures: 0,
        worst_rel: 0.0,
    };
    for b in 0..batches {
        let hyper = PpoHyper {
            explore_eps: if b % 2 == 1 { 0.2 } else { 0.0 },
            ..PpoHyper::default()
        };
        let params = random_params(&mut rng, obs_dim);
        let mb = random_minibatch(&mut rng, &params, 16, hyper.explore_eps);
        let (_, grads) = loss_and_gradient(&params, &mb, &hyper);
        let analytic: Vec<f64> = grads.iter().collect();
        for _ in 0..coords_per_batch {
            let idx = rng.random_range(0..params.num_params());
            let mut plus = params.clone();
            *plus.get_mut(idx) += H;
            let mut minus = params.clone();
            *minus.get_mut(idx) -= H;
            let numeric =
                (evaluate_loss(&plus, &mb, &hyper).total - evaluate_loss(&minus, &mb, &hyper).total) / (2.0 * H);
            let a = analytic[idx];
            let scale = a.abs().max(numeric.abs());
            let rel = if scale < 1e-8 { 0.0 } else { (a - numeric).abs() / scale };
            report.checked += 1;
            if rel > TOL {
                report.failures += 1;
            }
            report.worst_rel = report.worst_rel.max(rel);
        }
    }
    report
}

// ---------------------------------------------------------------- viz oracles

/// Flies random actions from a reset until termination or `max_len` rows.
/// The final row is always marked terminal.
pub fn random_trajectory(
    rng: &mut impl Rng,
    world: &World,
    max_len: usize,
) -> Vec<uam_sim::viz::TrajectoryRecord> {
    use uam_sim::env::{self, Termination};
    use uam_sim::viz::TrajectoryRecord;
    let cfg = EnvConfig::default();
    let (mut state, _) = env::reset(world, &cfg, rng.random()).unwrap();
    let mut out = vec![TrajectoryRecord::initial(&state, cfg.dt)];
    while out.len() < max_len {
        let action = random_action(rng);
        let step = env::step(&state, action, world, &cfg);
        let mut term = step.termination;
        if out.len() + 1 == max_len && !term.is_terminal() {
            term = Termination::Timeout;
        }
        out.push(TrajectoryRecord::from_state(&step.state, cfg.dt, action, step.reward, term));
        if term.is_terminal() {
            break;
        }
        state = step.state;
    }
    out
}

/// Record index minimizing `|t - f * T|`, earliest on ties.
pub fn brute_snapshot(traj: &[uam_sim::viz::TrajectoryRecord], f: f64) -> usize {
    let target = f * traj.last().unwrap().t;
    (0..traj.len())
        .min_by(|&a, &b| {
            let da = (traj[a].t - target).abs();
            let db = (traj[b].t - target).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .unwrap()
}

fn attr<'a>(element: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = element.find(&key)? + key.len();
    let len = element[start..].find('"')?;
    Some(&element[start..start + len])
}

/// Elements whose tag is `<tag` and class is `class`.
pub fn svg_elements<'a>(svg: &'a str, tag: &str, class: &str) -> Vec<&'a str> {
    let open = format!("<{tag} ");
    svg.match_indices(&open)
        .map(|(i, _)| {
            let end = svg[i..].find('>').unwrap();
            &svg[i..i + end + 1]
        })
        .filter(|e| attr(e, "class") == Some(class))
        .collect()
}

/// Checks a rendered top-down SVG against the world and trajectory. Returns
/// a description of every mismatch.
pub fn svg_contract_mismatches(
    svg: &str,
    world: &World,
    traj: &[uam_sim::viz::TrajectoryRecord],
    fractions: &[f64],
) -> Vec<String> {
    let mut bad = Vec::new();
    let rects = svg_elements(svg, "rect", "building");
    if rects.len() != world.buildings.len() {
        bad.push(format!("{} building rects for {} buildings", rects.len(), world.buildings.len()));
    }
    let lines = svg_elements(svg, "polyline", "trajectory");
    if lines.len() != 1 {
        bad.push(format!("{} trajectory polylines", lines.len()));
    } else {
        let n = attr(lines[0], "points").unwrap().split_whitespace().count();
        if n != traj.len() {
            bad.push(format!("{n} polyline points for {} records", traj.len()));
        }
    }
    if svg_elements(svg, "circle", "goal").len() != 1 {
        bad.push("goal circle count".into());
    }
    let snaps = svg_elements(svg, "g", "snapshot");
    if snaps.len() != fractions.len() {
        bad.push(format!("{} snapshots for {} fractions", snaps.len(), fractions.len()));
    }
    for (g, f) in snaps.iter().zip(fractions) {
        let step: u32 = attr(g, "data-step").unwrap().parse().unwrap();
        let want = traj[brute_snapshot(traj, *f)].step;
        if step != want {
            bad.push(format!("snapshot {f}: step {step}, expected {want}"));
        }
    }
    bad
}

// ---------------------------------------------------------------- comm helpers

pub mod comm {
    use std::net::{SocketAddr, TcpStream};
    use std::thread::JoinHandle;

    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use uam_sim::comm::{read_message, write_message, Message, Server, ServerConfig};
    use uam_sim::env::{self, Action, EnvConfig, UamState};
    use uam_sim::vec_env::stream_seed;
    use uam_sim::World;

    pub fn start(config: ServerConfig) -> (SocketAddr, JoinHandle<uam_sim::Result<()>>) {
        let server = Server::bind("127.0.0.1:0", config).unwrap();
        let addr = server.local_addr().unwrap();
        (addr, std::thread::spawn(move || server.run()))
    }

    pub fn request(stream: &mut TcpStream, msg: &Message) -> Message {
        write_message(stream, msg).unwrap();
        read_message(stream).unwrap().expect("reply")
    }

    /// The environments behind a session, stepped with `env::reset` and
    /// `env::step` directly.
    pub struct Replay {
        world: World,
        cfg: EnvConfig,
        streams: Vec<ChaCha8Rng>,
        states: Vec<UamState>,
    }

    impl Replay {
        pub fn reset(world: &World, cfg: &EnvConfig, n: usize, seed: u64) -> (Self, Vec<Vec<f64>>) {
            let mut streams: Vec<ChaCha8Rng> =
                (0..n).map(|i| ChaCha8Rng::seed_from_u64(stream_seed(seed, i))).collect();
            let mut states = Vec::new();
            let mut obs = Vec::new();
            for s in &mut streams {
                let (state, o) = env::reset(world, cfg, s.next_u64()).unwrap();
                states.push(state);
                obs.push(o.0);
            }
            let replay = Replay {
                world: world.clone(),
                cfg: cfg.clone(),
                streams,
                states,
            };
            (replay, obs)
        }

        /// Observations, rewards and dones for one batched step.
        pub fn step(&mut self, actions: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
            let mut obs = Vec::new();
            let mut rewards = Vec::new();
            let mut dones = Vec::new();
            for (i, a) in actions.iter().enumerate() {
                let out = env::step(&self.states[i], Action::new(a[0], a[1], a[2]), &self.world, &self.cfg);
                rewards.push(out.reward.total);
                let done = out.termination.is_terminal();
                dones.push(done);
                if done {
                    let (state, o) = env::reset(&self.world, &self.cfg, self.streams[i].next_u64()).unwrap();
                    self.states[i] = state;
                    obs.push(o.0);
                } else {
                    self.states[i] = out.state;
                    obs.push(out.observation.0);
                }
            }
            (obs, rewards, dones)
        }
    }

    pub fn random_actions(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.2..1.2)).collect()).collect()
    }

    pub fn bits(rows: &[Vec<f64>]) -> Vec<Vec<u64>> {
        rows.iter().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect()
    }

    pub struct LoopbackReport {
        pub steps: usize,
        pub obs_mismatches: usize,
        pub reward_mismatches: usize,
        pub done_mismatches: usize,
        pub resets_seen: usize,
    }

    /// Handshake, reset and `steps` random steps over TCP, each compared
    /// bitwise with an in-process replay.
    pub fn scripted_session(config: ServerConfig, steps: usize, seed: u64) -> LoopbackReport {
        let (addr, handle) = start(config.clone());
        let mut stream = TcpStream::connect(addr).unwrap();
        let ack = request(&mut stream, &Message::Handshake { version: 1 });
        assert!(matches!(ack, Message::HandshakeAck { .. }), "{ack:?}");
        let Message::Observations { obs } = request(&mut stream, &Message::Reset { seed }) else {
            panic!("expected observations");
        };
        let (mut replay, want) = Replay::reset(&config.world, &config.env, config.n_envs, seed);
        let mut report = LoopbackReport {
            steps: 0,
            obs_mismatches: usize::from(bits(&obs) != bits(&want)),
            reward_mismatches: 0,
            done_mismatches: 0,
            resets_seen: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for _ in 0..steps {
            let actions = random_actions(&mut rng, config.n_envs);
            let reply = request(&mut stream, &Message::Step { actions: actions.clone() });
            let Message::Transition { obs, rewards, dones, .. } = reply else {
                panic!("expected transition, got {reply:?}");
            };
            let (want_obs, want_rewards, want_dones) = replay.step(&actions);
            report.steps += 1;
            report.obs_mismatches += usize::from(bits(&obs) != bits(&want_obs));
            let rb = |r: &[f64]| r.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            report.reward_mismatches += usize::from(rb(&rewards) != rb(&want_rewards));
            report.done_mismatches += usize::from(dones != want_dones);
            report.resets_seen += dones.iter().filter(|d| **d).count();
        }
        write_message(&mut stream, &Message::Close {}).unwrap();
        handle.join().unwrap().unwrap();
        report
    }
}
