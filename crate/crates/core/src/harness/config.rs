//! Declarative run configuration.
//!
//! A run config is a TOML file of flat `key = value` pairs. Every key is
//! optional; missing keys take the value of the selected profile.
//!
//! ```toml
//! profile = "desk"          # smoke | desk | full
//! run_dir = "runs/desk"
//! data_seed = 42
//! seeds = [1, 2, 3]
//! epochs = 1000
//! conditions = [1, 3, 5]    # error-regression settings W_k of experiment 2
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetConfig, FsmSpec, NoiseSpec};
use crate::error::{PvrnnError, Result};
use crate::error_regression::{ERConfig, InnerNoise};
use crate::harness::io::read_text;
use crate::network::MetaPriorConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Seconds-scale run for CI.
    Smoke,
    /// Reduced corpus and seed count for a single machine.
    Desk,
    /// Corpus and counts of the original study.
    Full,
}

impl FromStr for Profile {
    type Err = PvrnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            _ => Err(PvrnnError::InvalidArgument(format!(
                "unknown profile {s:?} (expected smoke, desk or full)"
            ))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Smoke => "smoke",
            Profile::Desk => "desk",
            Profile::Full => "full",
        })
    }
}

/// Training meta-prior setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    W1,
    W2,
}

impl Setting {
    pub fn meta(self) -> MetaPriorConfig {
        match self {
            Setting::W1 => MetaPriorConfig::setting_w1(),
            Setting::W2 => MetaPriorConfig::setting_w2(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Setting::W1 => "w1",
            Setting::W2 => "w2",
        }
    }
}

impl FromStr for Setting {
    type Err = PvrnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w1" => Ok(Setting::W1),
            "w2" => Ok(Setting::W2),
            _ => Err(PvrnnError::InvalidArgument(format!(
                "unknown setting {s:?} (expected w1 or w2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub run_dir: PathBuf,
    pub data_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub primitives_per_sequence: usize,
    pub steps_per_primitive: usize,
    pub proprio_noise_sd: f64,
    pub vision_noise_sd: f64,
    pub vision_drift_sd: f64,
    pub vision_drift_tau: f64,
    pub vision_drift_dims: usize,
    /// Model seeds; one trained network per seed and setting.
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub train_alpha: f64,
    pub log_every: usize,
    pub window_len: usize,
    pub iters_per_step: usize,
    pub er_alpha: f64,
    pub inner_noise: InnerNoise,
    /// Indices `k` of the error-regression settings `W_k`.
    pub conditions: Vec<u32>,
}

/// The same keys, all optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    profile: Option<Profile>,
    run_dir: Option<PathBuf>,
    data_seed: Option<u64>,
    n_train: Option<usize>,
    n_test: Option<usize>,
    primitives_per_sequence: Option<usize>,
    steps_per_primitive: Option<usize>,
    proprio_noise_sd: Option<f64>,
    vision_noise_sd: Option<f64>,
    vision_drift_sd: Option<f64>,
    vision_drift_tau: Option<f64>,
    vision_drift_dims: Option<usize>,
    seeds: Option<Vec<u64>>,
    epochs: Option<usize>,
    train_alpha: Option<f64>,
    log_every: Option<usize>,
    window_len: Option<usize>,
    iters_per_step: Option<usize>,
    er_alpha: Option<f64>,
    inner_noise: Option<InnerNoise>,
    conditions: Option<Vec<u32>>,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let noise = NoiseSpec::default();
        let base = Self {
            profile,
            run_dir: PathBuf::from(format!("runs/{profile}")),
            data_seed: 42,
            n_train: 6,
            n_test: 3,
            primitives_per_sequence: 4,
            steps_per_primitive: 50,
            proprio_noise_sd: noise.proprio_noise_sd,
            vision_noise_sd: noise.vision_noise_sd,
            vision_drift_sd: noise.vision_drift_sd,
            vision_drift_tau: noise.vision_drift_tau,
            vision_drift_dims: noise.vision_drift_dims,
            seeds: vec![1, 2, 3],
            epochs: 1000,
            train_alpha: 0.001,
            log_every: 0,
            window_len: 30,
            iters_per_step: 30,
            er_alpha: 0.2,
            inner_noise: InnerNoise::PerStep,
            conditions: vec![1, 3, 5],
        };
        match profile {
            Profile::Desk => base,
            Profile::Smoke => Self {
                n_train: 2,
                n_test: 1,
                primitives_per_sequence: 2,
                steps_per_primitive: 20,
                seeds: vec![1, 2],
                epochs: 20,
                window_len: 10,
                iters_per_step: 5,
                ..base
            },
            Profile::Full => Self {
                n_train: 30,
                primitives_per_sequence: 8,
                seeds: (1..=10).collect(),
                epochs: 4000,
                conditions: vec![1, 2, 3, 4, 5],
                ..base
            },
        }
    }

    /// Parse TOML text; unspecified keys come from its `profile` (or `fallback`).
    pub fn from_toml(text: &str, fallback: Profile) -> Result<Self> {
        Self::resolve(Some(text), None, fallback)
    }

    /// Like [`from_toml`](Self::from_toml), with `force` taking precedence
    /// over the file's own profile.
    pub fn resolve(text: Option<&str>, force: Option<Profile>, fallback: Profile) -> Result<Self> {
        let p: PartialConfig = match text {
            Some(t) => toml::from_str(t)
                .map_err(|e| PvrnnError::InvalidArgument(format!("malformed run config: {e}")))?,
            None => PartialConfig::default(),
        };
        let base = Self::profile(force.or(p.profile).unwrap_or(fallback));
        let cfg = Self {
            profile: base.profile,
            run_dir: p.run_dir.unwrap_or(base.run_dir),
            data_seed: p.data_seed.unwrap_or(base.data_seed),
            n_train: p.n_train.unwrap_or(base.n_train),
            n_test: p.n_test.unwrap_or(base.n_test),
            primitives_per_sequence: p
                .primitives_per_sequence
                .unwrap_or(base.primitives_per_sequence),
            steps_per_primitive: p.steps_per_primitive.unwrap_or(base.steps_per_primitive),
            proprio_noise_sd: p.proprio_noise_sd.unwrap_or(base.proprio_noise_sd),
            vision_noise_sd: p.vision_noise_sd.unwrap_or(base.vision_noise_sd),
            vision_drift_sd: p.vision_drift_sd.unwrap_or(base.vision_drift_sd),
            vision_drift_tau: p.vision_drift_tau.unwrap_or(base.vision_drift_tau),
            vision_drift_dims: p.vision_drift_dims.unwrap_or(base.vision_drift_dims),
            seeds: p.seeds.unwrap_or(base.seeds),
            epochs: p.epochs.unwrap_or(base.epochs),
            train_alpha: p.train_alpha.unwrap_or(base.train_alpha),
            log_every: p.log_every.unwrap_or(base.log_every),
            window_len: p.window_len.unwrap_or(base.window_len),
            iters_per_step: p.iters_per_step.unwrap_or(base.iters_per_step),
            er_alpha: p.er_alpha.unwrap_or(base.er_alpha),
            inner_noise: p.inner_noise.unwrap_or(base.inner_noise),
            conditions: p.conditions.unwrap_or(base.conditions),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, fallback: Profile) -> Result<Self> {
        Self::from_toml(&read_text(path)?, fallback).map_err(|e| match e {
            PvrnnError::InvalidArgument(reason) => PvrnnError::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PvrnnError::InvalidArgument(msg));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be positive".into());
        }
        let len = self.primitives_per_sequence * self.steps_per_primitive;
        if len < self.window_len + 1 {
            return bad(format!(
                "sequences of {len} steps are shorter than window_len + 1"
            ));
        }
        if let Some(k) = self.conditions.iter().find(|k| !(1..=5).contains(*k)) {
            return bad(format!("condition index {k} outside 1..=5"));
        }
        if !(self.train_alpha > 0.0 && self.er_alpha > 0.0) {
            return bad("learning rates must be positive".into());
        }
        let data = self.dataset();
        data.fsm.validate()?;
        data.noise.validate()?;
        self.er(MetaPriorConfig::setting_w1())
            .validate(&crate::network::NetworkSpec::standard())
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            n_train: self.n_train,
            n_test: self.n_test,
            fsm: FsmSpec::with_length(self.primitives_per_sequence, self.steps_per_primitive),
            noise: NoiseSpec {
                proprio_noise_sd: self.proprio_noise_sd,
                vision_noise_sd: self.vision_noise_sd,
                vision_drift_sd: self.vision_drift_sd,
                vision_drift_tau: self.vision_drift_tau,
                vision_drift_dims: self.vision_drift_dims,
            },
            seed: self.data_seed,
        }
    }

    pub fn train(&self, setting: Setting, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.epochs, seed, setting.meta());
        cfg.adam.alpha = self.train_alpha;
        cfg.log_every = self.log_every;
        cfg
    }

    pub fn er(&self, meta: MetaPriorConfig) -> ERConfig {
        let mut cfg = ERConfig::new(meta);
        cfg.window_len = self.window_len;
        cfg.iters_per_step = self.iters_per_step;
        cfg.adam.alpha = self.er_alpha;
        cfg.inner_noise = self.inner_noise;
        cfg
    }

    pub fn data_dir(&self) -> PathBuf {
        self.run_dir.join("data")
    }

    pub fn checkpoint_path(&self, setting: Setting, seed: u64) -> PathBuf {
        self.run_dir
            .join("checkpoints")
            .join(format!("{}_seed{seed}.ckpt", setting.label()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        for p in [Profile::Smoke, Profile::Desk, Profile::Full] {
            RunConfig::profile(p).validate().unwrap();
        }
        let full = RunConfig::profile(Profile::Full);
        assert_eq!(
            (full.n_train, full.seeds.len(), full.conditions.len()),
            (30, 10, 5)
        );
        assert_eq!(full.primitives_per_sequence * full.steps_per_primitive, 400);
    }

    #[test]
    fn toml_overrides_profile() {
        let cfg = RunConfig::from_toml(
            "profile = \"smoke\"\nseeds = [4, 5]\nepochs = 3\n",
            Profile::Desk,
        )
        .unwrap();
        assert_eq!(cfg.profile, Profile::Smoke);
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.n_train, 2);
        let again = RunConfig::from_toml(&cfg.to_toml(), Profile::Full).unwrap();
        assert_eq!(again, cfg);
        let forced = RunConfig::resolve(
            Some("profile = \"smoke\""),
            Some(Profile::Full),
            Profile::Desk,
        )
        .unwrap();
        assert_eq!(forced.profile, Profile::Full);
    }

    #[test]
    fn malformed_configs_rejected() {
        assert!(RunConfig::from_toml("epochs = \"many\"", Profile::Desk).is_err());
        assert!(RunConfig::from_toml("unknown_key = 1", Profile::Desk).is_err());
        assert!(RunConfig::from_toml("conditions = [6]", Profile::Desk).is_err());
        assert!(RunConfig::from_toml("window_len = 500", Profile::Desk).is_err());
        assert!("huge".parse::<Profile>().is_err());
    }
}
