//! One TOML file drives a whole run. A snapshot of the effective
//! configuration is written into every run directory so a run can be
//! reproduced from its outputs alone.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub batch_size: usize,
    /// Supervised steps for the held-out evaluation OCR; each step trains on
    /// a freshly rendered batch of random plates.
    pub evaluator_steps: usize,
    pub evaluator_lr: f64,
    pub evaluator_channels: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            batch_size: 16,
            evaluator_steps: 1500,
            evaluator_lr: 1e-3,
            evaluator_channels: 48,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub workdir: PathBuf,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
}

pub const SNAPSHOT_FILE: &str = "run_config.toml";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serialize config: {e}")))?;
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    /// Write the effective configuration into a run directory.
    pub fn snapshot_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.save(&dir.join(SNAPSHOT_FILE))
    }

    /// Propagate one seed everywhere; used by the `--seed` override.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.data.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        let mut cfg = RunConfig::default();
        cfg.apply_seed(99);
        cfg.train.epochs = 7;
        cfg.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded.seed, 99);
        assert_eq!(loaded.data.seed, 99);
        assert_eq!(loaded.train.seed, 99);
        assert_eq!(loaded.train.epochs, 7);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = 5\n[train]\nepochs = 2\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.eval.batch_size, 16);
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = RunConfig::load(Path::new("/nonexistent/nope.toml")).unwrap_err();
        assert!(err.to_string().contains("nope.toml"));
    }

    #[test]
    fn snapshot_lands_in_the_run_dir() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        cfg.snapshot_into(dir.path()).unwrap();
        assert!(dir.path().join(SNAPSHOT_FILE).exists());
        // And the snapshot reloads to the same effective config.
        let reloaded = RunConfig::load(&dir.path().join(SNAPSHOT_FILE)).unwrap();
        assert_eq!(reloaded.train.epochs, cfg.train.epochs);
    }
}
