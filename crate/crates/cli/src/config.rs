//! Run configuration file: TOML with `[env]`, `[world]`, `[ppo]` and `[run]` tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use uam_sim::ppo::{PpoHyper, TrainConfig, WorldSource};
use uam_sim::{EnvConfig, GenConfig};

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub world: toml::Table,
    pub ppo: PpoHyper,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub checkpoint_every: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("run"),
            checkpoint_every: 0,
        }
    }
}

/// A configuration problem, always phrased in terms of the offending key.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn section_error(section: &str, e: uam_sim::Error) -> ConfigError {
    let msg = match e {
        uam_sim::Error::Config(m) => m,
        other => other.to_string(),
    };
    ConfigError(format!("[{section}] {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// The `[world]` table as a world source. `world_file` excludes every
    /// generator key; relative paths resolve against `base`.
    pub fn world_source(&self, base: &Path) -> Result<WorldSource, ConfigError> {
        if let Some(value) = self.world.get("world_file") {
            let Some(file) = value.as_str() else {
                return Err(ConfigError("[world] world_file must be a string".into()));
            };
            if let Some(other) = self.world.keys().find(|k| *k != "world_file") {
                return Err(ConfigError(format!(
                    "[world] key `{other}` cannot be combined with world_file"
                )));
            }
            return Ok(WorldSource::File(base.join(file)));
        }
        let gen: GenConfig = self
            .world
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("[world] {}", e.message())))?;
        gen.validate().map_err(|e| section_error("world", e))?;
        Ok(WorldSource::Generate(gen))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate().map_err(|e| section_error("env", e))?;
        self.ppo.validate().map_err(|e| section_error("ppo", e))?;
        Ok(())
    }

    /// Validated trainer settings; relative paths resolve against `base`.
    pub fn train_config(&self, base: &Path) -> Result<TrainConfig, ConfigError> {
        self.validate()?;
        Ok(TrainConfig {
            env: self.env.clone(),
            world: self.world_source(base)?,
            hyper: self.ppo.clone(),
            seed: self.run.seed,
            out_dir: Some(base.join(&self.run.out_dir)),
            checkpoint_every: self.run.checkpoint_every,
            ..TrainConfig::default()
        })
    }
}

/// Directory that relative paths in the config file at `path` resolve against.
pub fn base_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
