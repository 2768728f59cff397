//! The run configuration: every tunable default in one TOML document.
//!
//! Lookup order is an explicit path, then the file named by `DEMOBOT_CONFIG`,
//! then built-in defaults. Unknown keys are rejected.

use crate::error::{Error, Result};
use demobot_core::env::surrogate::{EnvConfig, Task};
use demobot_core::policy::{Aggregation, GcbcParams};
use demobot_core::reachability::{MergeRule, DEFAULT_GAMMA, DEFAULT_TOL};
use demobot_core::subgoal::SubgoalParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const CONFIG_ENV: &str = "DEMOBOT_CONFIG";

macro_rules! env_overrides {
    ($($(#[$doc:meta])* $field:ident: $ty:ty),* $(,)?) => {
        /// Optional replacements for the task's default environment settings.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct EnvOverrides {
            $($(#[$doc])* #[serde(skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>,)*
        }

        impl EnvOverrides {
            pub fn apply(&self, mut cfg: EnvConfig) -> EnvConfig {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
                cfg
            }
        }
    };
}

env_overrides! {
    distance: [f64; 2],
    lateral: f64,
    heading_deg: f64,
    particles: usize,
    curtain_width: f64,
    gap_width: f64,
    max_strain: f64,
    min_spacing: f64,
    randomize_material: bool,
    strain_range: [f64; 2],
    body_step: f64,
    turn_step_deg: f64,
    hand_step: f64,
    grasp_radius: f64,
    base_radius: f64,
    clear_radius: f64,
    fov_deg: f64,
    view_range: f64,
    solver_iterations: usize,
    feature_dim: usize,
    lift_seed: u64,
    noise_scale: f64,
    gripper_signal: f64,
    jitter_period: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Seed for demonstration generation.
    pub seed: u64,
    pub gamma: f64,
    pub value_tol: f64,
    pub merge: MergeRule,
    pub aggregation: Aggregation,
    pub subgoal: SubgoalParams,
    pub gcbc: GcbcParams,
    /// Applied to both tasks.
    pub env: EnvOverrides,
    pub curtain_open: EnvOverrides,
    pub gap_cover: EnvOverrides,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma: DEFAULT_GAMMA,
            value_tol: DEFAULT_TOL,
            merge: MergeRule::default(),
            aggregation: Aggregation::default(),
            subgoal: SubgoalParams::default(),
            gcbc: GcbcParams::default(),
            env: EnvOverrides::default(),
            curtain_open: EnvOverrides::default(),
            gap_cover: EnvOverrides::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Loads `explicit`, else the file named by `DEMOBOT_CONFIG`, else the defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = explicit.map(Path::to_path_buf).or_else(|| {
            std::env::var_os(CONFIG_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        });
        match path {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.subgoal.validate()?;
        self.gcbc.validate()?;
        let seeds = [self.seed, self.gcbc.seed].into_iter().chain(
            [&self.env, &self.curtain_open, &self.gap_cover]
                .into_iter()
                .filter_map(|o| o.lift_seed),
        );
        for s in seeds {
            if s > i64::MAX as u64 {
                return Err(Error::Config(format!("seed {s} exceeds {}", i64::MAX)));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.value_tol > 0.0) {
            return Err(Error::Config("value_tol must be positive".into()));
        }
        match self.merge {
            MergeRule::Auto(v) | MergeRule::Fixed(v) if !(v >= 0.0 && v.is_finite()) => {
                Err(Error::Config(format!("merge parameter {v} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    /// The environment settings for `task` after both override layers.
    pub fn env_config(&self, task: Task) -> EnvConfig {
        let per_task = match task {
            Task::CurtainOpen => &self.curtain_open,
            Task::GapCover => &self.gap_cover,
        };
        per_task.apply(self.env.apply(EnvConfig::for_task(task)))
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.to_toml().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
