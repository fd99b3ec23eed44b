//! `uam`: world generation, training, evaluation, rendering and serving.
//!
//! Exit codes: 0 success, 2 usage/config/parse/input errors, 3 numerical divergence.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uam_sim::comm::{Server, ServerConfig, DEFAULT_PORT};
use uam_sim::ppo::{evaluate, summarize, train_with_progress, Checkpoint};
use uam_sim::viz::{
    export_scene, read_trajectory, render_reward_curve, render_topdown, write_trajectory, TopdownOptions,
};
use uam_sim::{generate_world, EnvConfig, GenConfig, World};

use config::{base_dir, ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "uam", version, about = "Urban aerial mobility simulator and PPO trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a procedural city and write it as JSON.
    GenerateWorld(GenerateArgs),
    /// Train a policy from a TOML run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Suppress per-update progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Roll out a checkpoint and write one trajectory CSV per episode.
    Evaluate(EvaluateArgs),
    /// Draw a top-down SVG of a trajectory over its world.
    Render {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of equal time slices; markers are drawn at each boundary.
        #[arg(long, default_value_t = 8)]
        snapshots: usize,
        /// Also export the scene as a Wavefront OBJ file.
        #[arg(long)]
        obj: Option<PathBuf>,
    },
    /// Draw the training reward curve from a metrics CSV.
    PlotRewards {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Moving-average window in updates.
        #[arg(long, default_value_t = 10)]
        window: usize,
    },
    /// Serve environments to one external trainer over TCP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = GenConfig::default().n_buildings)]
    buildings: usize,
    #[arg(long)]
    out: PathBuf,
    /// Full world extents in meters.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    extent: Option<Vec<f64>>,
    #[arg(long)]
    height_min: Option<f64>,
    #[arg(long)]
    height_max: Option<f64>,
    #[arg(long)]
    footprint_min: Option<f64>,
    #[arg(long)]
    footprint_max: Option<f64>,
    #[arg(long)]
    spawn_radius: Option<f64>,
    #[arg(long)]
    goal_radius: Option<f64>,
    #[arg(long)]
    altitude_min: Option<f64>,
    #[arg(long)]
    altitude_max: Option<f64>,
    #[arg(long)]
    min_separation: Option<f64>,
}

impl GenerateArgs {
    fn gen_config(&self) -> GenConfig {
        let mut g = GenConfig {
            n_buildings: self.buildings,
            ..GenConfig::default()
        };
        if let Some(e) = &self.extent {
            g.extent = [e[0], e[1], e[2]];
        }
        let overrides = [
            (self.height_min, &mut g.height_min),
            (self.height_max, &mut g.height_max),
            (self.footprint_min, &mut g.footprint_min),
            (self.footprint_max, &mut g.footprint_max),
            (self.spawn_radius, &mut g.spawn_radius),
            (self.goal_radius, &mut g.goal_radius),
            (self.altitude_min, &mut g.altitude_min),
            (self.altitude_max, &mut g.altitude_max),
            (self.min_separation, &mut g.min_separation),
        ];
        for (value, field) in overrides {
            if let Some(v) = value {
                *field = v;
            }
        }
        g
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    world: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Take the mean action instead of sampling.
    #[arg(long)]
    deterministic: bool,
    /// Run configuration whose `[env]` table the policy was trained with.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for `episode_NNNN.csv` trajectories.
    #[arg(long, default_value = "evaluation")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// World JSON; a default world generated from --seed when omitted.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n_envs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run configuration supplying the `[env]` table.
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<uam_sim::Error> for Failure {
    fn from(e: uam_sim::Error) -> Self {
        match e {
            uam_sim::Error::NumericalDivergence(m) => Failure::Numerical(format!("numerical divergence: {m}")),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(format!("config error: {e}"))
    }
}

type CmdResult = Result<(), Failure>;

fn env_from(config: Option<&Path>) -> Result<EnvConfig, Failure> {
    match config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            cfg.validate()?;
            Ok(cfg.env)
        }
        None => Ok(EnvConfig::default()),
    }
}

fn generate(args: &GenerateArgs) -> CmdResult {
    let world = generate_world(&args.gen_config(), args.seed)?;
    world.save(&args.out)?;
    println!("wrote {} ({} buildings)", args.out.display(), world.buildings.len());
    Ok(())
}

fn train(path: &Path, quiet: bool) -> CmdResult {
    let cfg = RunConfig::load(path)?;
    let train_cfg = cfg.train_config(&base_dir(path))?;
    let out_dir = train_cfg.out_dir.clone().unwrap_or_default();
    let artifacts = train_with_progress(&train_cfg, |m| {
        if !quiet {
            println!(
                "update {} env_steps {} mean_ep_reward {:.3} goal_rate {:.3} collision_rate {:.3}",
                m.update, m.env_steps, m.mean_ep_reward, m.goal_rate, m.collision_rate
            );
        }
    })?;
    if let Some(msg) = artifacts.divergence {
        return Err(Failure::Numerical(format!(
            "numerical divergence after {} env steps: {msg}; last good checkpoint in {}",
            artifacts.env_steps,
            out_dir.display()
        )));
    }
    println!("trained {} env steps; outputs in {}", artifacts.env_steps, out_dir.display());
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> CmdResult {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let world = World::load(&args.world)?;
    let env = env_from(args.config.as_deref())?;
    if env.obs_dim() != ckpt.obs_dim {
        return Err(Failure::Input(format!(
            "checkpoint obs_dim {} does not match environment obs_dim {} (k_nearest {})",
            ckpt.obs_dim,
            env.obs_dim(),
            env.k_nearest
        )));
    }
    let episodes = evaluate(
        &ckpt.params,
        &world,
        &env,
        args.episodes,
        args.seed,
        args.deterministic,
        ckpt.hyper.explore_eps,
    )?;
    if !episodes.is_empty() {
        fs::create_dir_all(&args.out_dir).map_err(|e| Failure::Input(format!("{}: {e}", args.out_dir.display())))?;
    }
    for (i, ep) in episodes.iter().enumerate() {
        write_trajectory(&ep.trajectory, args.out_dir.join(format!("episode_{i:04}.csv")))?;
    }
    let s = summarize(&episodes.iter().map(|e| e.summary).collect::<Vec<_>>());
    println!("episodes {}", s.episodes);
    println!("goal_rate {}", s.goal_rate);
    println!("collision_rate {}", s.collision_rate);
    println!("mean_reward {}", s.mean_reward);
    Ok(())
}

fn render(trajectory: &Path, world: &Path, out: &Path, snapshots: usize, obj: Option<&Path>) -> CmdResult {
    let records = read_trajectory(trajectory)?;
    let world = World::load(world)?;
    let svg = render_topdown(&world, &records, &TopdownOptions::with_slices(snapshots))?;
    fs::write(out, svg).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    if let Some(path) = obj {
        export_scene(&world, &records, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn plot_rewards(metrics: &Path, out: &Path, window: usize) -> CmdResult {
    let svg = render_reward_curve(metrics, window)?;
    fs::write(out, svg).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn serve(args: &ServeArgs) -> CmdResult {
    let world = match &args.world {
        Some(path) => World::load(path)?,
        None => generate_world(&GenConfig::default(), args.seed)?,
    };
    let config = ServerConfig {
        n_envs: args.n_envs,
        world,
        env: env_from(args.config.as_deref())?,
        master_seed: args.seed,
    };
    let addr = format!("{}:{}", args.host, args.port);
    let server = Server::bind(addr.as_str(), config)
        .map_err(|e| Failure::Input(format!("cannot bind {addr}: {e}")))?;
    println!("listening on {}", server.local_addr()?);
    // Callers may be waiting on this line to learn an ephemeral port.
    let _ = std::io::stdout().flush();
    server.run()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenerateWorld(args) => generate(args),
        Command::Train { config, quiet } => train(config, *quiet),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Render {
            trajectory,
            world,
            out,
            snapshots,
            obj,
        } => render(trajectory, world, out, *snapshots, obj.as_deref()),
        Command::PlotRewards { metrics, out, window } => plot_rewards(metrics, out, *window),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
