use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{EncoderConfig, TrainConfig};
use crate::envs::{EnvSpec, GridNavEnv, QualityMix};
use crate::error::{Error, Result};
use crate::reward::RewardConfig;
use crate::selection::{SelectionMode, DEFAULT_EPS_D, DEFAULT_N_BIN};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Offline dataset generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_episodes: usize,
    /// `(behavior noise, fraction of episodes)` pairs.
    pub mix: QualityMix,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_episodes: 200,
            mix: QualityMix(vec![(0.1, 0.25), (0.4, 0.25), (0.7, 0.25), (1.0, 0.25)]),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    #[default]
    Scripted,
    Perfect,
    Human,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSection {
    pub mode: TeacherMode,
    pub epsilon: f64,
    /// Seconds to wait for a round of human labels; absent means forever.
    pub timeout_secs: Option<f64>,
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self {
            mode: TeacherMode::Scripted,
            epsilon: 0.5,
            timeout_secs: None,
        }
    }
}

/// One experiment, stored as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment_id: String,
    pub seed: u64,
    pub horizon: usize,
    pub n_total: usize,
    pub m: usize,
    pub n_init: usize,
    pub n_emb: usize,
    pub n_reward: usize,
    pub n_bin: usize,
    pub eps_d: f64,
    pub dim: usize,
    pub pool_size: usize,
    pub selection: SelectionMode,
    pub count_skips_toward_budget: bool,
    pub held_out_queries: usize,
    pub held_out_segments: usize,
    pub env: EnvSpec,
    pub dataset: DatasetConfig,
    pub teacher: TeacherSection,
    pub embedding: TrainConfig,
    pub encoder: EncoderConfig,
    pub reward: RewardConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            experiment_id: "clarify".into(),
            seed: 0,
            horizon: 50,
            n_total: 500,
            m: 50,
            n_init: 20_000,
            n_emb: 2_000,
            n_reward: 50,
            n_bin: DEFAULT_N_BIN,
            eps_d: DEFAULT_EPS_D,
            dim: 16,
            pool_size: 1_000,
            selection: SelectionMode::Clarify,
            count_skips_toward_budget: true,
            held_out_queries: 500,
            held_out_segments: 500,
            env: EnvSpec::Gridnav(GridNavEnv::default()),
            dataset: DatasetConfig::default(),
            teacher: TeacherSection::default(),
            embedding: TrainConfig::default(),
            encoder: EncoderConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (name, v) in [
            ("horizon", self.horizon),
            ("n_total", self.n_total),
            ("m", self.m),
            ("n_bin", self.n_bin),
            ("dim", self.dim),
            ("pool_size", self.pool_size),
            ("held_out_queries", self.held_out_queries),
            ("held_out_segments", self.held_out_segments),
            ("dataset.n_episodes", self.dataset.n_episodes),
        ] {
            positive(name, v)?;
        }
        if self.m > self.n_total {
            return Err(Error::Config(format!(
                "m = {} exceeds n_total = {}",
                self.m, self.n_total
            )));
        }
        if !(self.teacher.epsilon >= 0.0 && self.teacher.epsilon.is_finite()) {
            return Err(Error::Config(
                "teacher.epsilon must be a non-negative number".into(),
            ));
        }
        if self
            .teacher
            .timeout_secs
            .is_some_and(|t| !(t > 0.0 && t.is_finite()))
        {
            return Err(Error::Config(
                "teacher.timeout_secs must be positive".into(),
            ));
        }
        if self.eps_d < 0.0 {
            return Err(Error::Config("eps_d must be non-negative".into()));
        }
        if let EnvSpec::Gridnav(g) = &self.env {
            g.validate()?;
        }
        if self.env.max_episode_len() < self.horizon {
            return Err(Error::Config("horizon exceeds the episode length".into()));
        }
        self.dataset.mix.validate()?;
        self.embedding.validate()?;
        self.reward.validate()?;
        if self.reward.ensemble_size < 2 && self.selection != SelectionMode::Random {
            return Err(Error::Config(
                "disagreement ranking needs reward.ensemble_size >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        let mut cfg = ExperimentConfig::default();
        cfg.teacher.epsilon = 0.1 + 0.2;
        cfg.eps_d = 1.234_567_890_123e-7;
        cfg.teacher.timeout_secs = Some(2.5);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\n[teacher]\nepsilon = 0.7\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.teacher.epsilon, 0.7);
        assert_eq!(cfg.m, 50);
    }

    #[test]
    fn rejects_batch_larger_than_budget() {
        let err = ExperimentConfig::from_toml("m = 60\nn_total = 50\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(ExperimentConfig::from_toml("bogus_key = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("schema_version = 9\n").is_err());
    }
}
