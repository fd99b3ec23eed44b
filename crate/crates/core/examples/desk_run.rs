//! Desk-scale training run printing progress and a final evaluation.
//!
//! `cargo run --release -p uam-sim --example desk_run -- <seed> [updates]`

use std::time::Instant;

use uam_sim::ppo::{evaluate, summarize, train_with_progress, PpoHyper, TrainConfig, WorldSource};
use uam_sim::{EnvConfig, GenConfig};

fn main() -> uam_sim::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let updates: u64 = args.next().map_or(400, |s| s.parse().expect("updates"));
    let hyper = PpoHyper {
        total_env_steps: updates * 8 * 128,
        ..PpoHyper::default()
    };
    let config = TrainConfig {
        env: EnvConfig::default(),
        world: WorldSource::Generate(GenConfig::default()),
        hyper,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let art = train_with_progress(&config, |m| {
        if m.update % 20 == 0 {
            println!(
                "update {:4} steps {:7} reward {:8.2} ± {:6.2} goal {:.2} coll {:.2} vloss {:8.3} ent {:.3} clip {:.3}",
                m.update, m.env_steps, m.mean_ep_reward, m.std_ep_reward, m.goal_rate, m.collision_rate,
                m.value_loss, m.entropy, m.clip_frac
            );
        }
    })?;
    println!("trained in {:.1?}", start.elapsed());
    let eps = evaluate(&art.params, &art.world, &config.env, 50, 12345, true, 0.0)?;
    let summary = summarize(&eps.iter().map(|e| e.summary).collect::<Vec<_>>());
    println!("eval: {summary:?}");
    Ok(())
}
