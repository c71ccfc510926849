use std::path::{Path, PathBuf};

use g2p_core::analysis::DfaOptions;
use g2p_core::babbling::{BabblingKind, NaiveParams, NaturalParams};
use g2p_core::kinematics::{Condition, Placement, ShapeParams};
use g2p_core::net::TrainConfig;
use g2p_core::plant::PlantParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Everything that determines a run. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Trials per babbling kind; trial `i` uses `seeds[i]`.
    pub trials: usize,
    pub seeds: Vec<u64>,
    /// Length of each babbling session (s).
    pub babble_duration: f64,
    /// Length of each tracking attempt (s).
    pub tracking_duration: f64,
    pub kinds: Vec<BabblingKind>,
    /// Condition numbers 1 to 3.
    pub conditions: Vec<u8>,
    /// Points on the desired foot loop.
    pub trajectory_samples: usize,
    /// Not part of the config hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub naive: NaiveParams,
    pub natural: NaturalParams,
    pub plant: PlantParams<f64>,
    pub net: TrainConfig,
    pub shape: ShapeParams,
    pub placement: Placement,
    pub dfa: DfaOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 4,
            seeds: vec![0, 1, 2, 3],
            babble_duration: 120.0,
            tracking_duration: 60.0,
            kinds: BabblingKind::ALL.to_vec(),
            conditions: vec![1, 2, 3],
            trajectory_samples: 200,
            output_dir: None,
            naive: NaiveParams::default(),
            natural: NaturalParams::default(),
            plant: PlantParams::default(),
            net: TrainConfig::default(),
            shape: ShapeParams::default(),
            placement: Placement::default(),
            dfa: DfaOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                HarnessError::MissingArtifact(path.to_path_buf())
            } else {
                HarnessError::io(path, e)
            }
        })?;
        Self::from_toml(&text)
    }

    /// Load `path` if given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.seeds.len() < self.trials {
            return bad("need at least one seed per trial");
        }
        if !(self.babble_duration > 0.0 && self.babble_duration.is_finite()) {
            return bad("babble_duration must be positive");
        }
        if !(self.tracking_duration > 0.0 && self.tracking_duration.is_finite()) {
            return bad("tracking_duration must be positive");
        }
        if self.kinds.is_empty() {
            return bad("kinds must not be empty");
        }
        if self.conditions.is_empty() || self.conditions.iter().any(|c| Condition::from_number(*c).is_none()) {
            return bad("conditions must be a non-empty list drawn from 1, 2, 3");
        }
        self.naive.validate()?;
        self.natural.validate()?;
        self.plant.validate()?;
        self.net.validate()?;
        Ok(())
    }

    /// Canonical TOML of the settings that affect results.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        toml::to_string(&c).expect("config is always representable as TOML")
    }

    /// SHA-256 of [`ExperimentConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.plant.dt
    }

    pub fn trial_seeds(&self) -> &[u64] {
        &self.seeds[..self.trials]
    }

    pub fn condition_list(&self) -> Vec<Condition> {
        self.conditions
            .iter()
            .filter_map(|c| Condition::from_number(*c))
            .collect()
    }
}

/// Seeds of the left and right babbling streams and of training for a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub babble_left: u64,
    pub babble_right: u64,
    pub train: u64,
}

impl TrialSeeds {
    pub fn new(seed: u64) -> Self {
        Self {
            babble_left: seed.wrapping_mul(2).wrapping_add(1),
            babble_right: seed.wrapping_mul(2).wrapping_add(2),
            train: seed,
        }
    }
}
