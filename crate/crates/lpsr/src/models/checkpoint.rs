//! Checkpoint directory layout: `weights.safetensors` with every parameter,
//! `config.json` with a snapshot of the model configuration, and
//! `metadata.json` with training progress.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::params::ParamStore;

pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const CONFIG_FILE: &str = "config.json";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_recognition_rate: f64,
    pub penalty_weights: Vec<f64>,
    pub rng_state_digest: u64,
}

pub fn save_checkpoint<C: Serialize>(
    dir: &Path,
    store: &ParamStore,
    config: &C,
    meta: &CheckpointMeta,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    store.save(&dir.join(WEIGHTS_FILE))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg = serde_json::to_string_pretty(config)?;
    fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
    let meta_path = dir.join(METADATA_FILE);
    let meta_json = serde_json::to_string_pretty(meta)?;
    fs::write(&meta_path, meta_json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn load_config<C: DeserializeOwned>(dir: &Path) -> Result<C> {
    let path = dir.join(CONFIG_FILE);
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&raw)?)
}

pub fn load_metadata(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(METADATA_FILE);
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Load weights into an already-built store. The store must have been built
/// from the same configuration; name or shape mismatches fail without
/// touching any parameter.
pub fn load_weights(dir: &Path, store: &mut ParamStore) -> Result<()> {
    store.load(&dir.join(WEIGHTS_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::generator::{Generator, GeneratorConfig};
    use candle_core::{DType, Device, Tensor};

    fn tiny() -> GeneratorConfig {
        GeneratorConfig {
            base_channels: 8,
            num_rcb: 1,
            units_per_rcb: 1,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 21);
        let gen = Generator::new(&mut st, &cfg).unwrap();
        let meta = CheckpointMeta {
            epoch: 3,
            val_recognition_rate: 0.25,
            penalty_weights: vec![1.0; 36],
            rng_state_digest: 42,
        };
        save_checkpoint(dir.path(), &st, &cfg, &meta).unwrap();

        let x = Tensor::rand(0f32, 1f32, (1, 3, 16, 48), &Device::Cpu).unwrap();
        let before = gen.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();

        let loaded_cfg: GeneratorConfig = load_config(dir.path()).unwrap();
        assert_eq!(loaded_cfg, cfg);
        assert_eq!(load_metadata(dir.path()).unwrap(), meta);

        let mut st2 = ParamStore::new(&Device::Cpu, DType::F32, 999);
        let gen2 = Generator::new(&mut st2, &loaded_cfg).unwrap();
        load_weights(dir.path(), &mut st2).unwrap();
        let after = gen2.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn mismatched_config_fails_without_mutation() {
        let dir = tempfile::tempdir().unwrap();
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 21);
        Generator::new(&mut st, &tiny()).unwrap();
        let meta = CheckpointMeta {
            epoch: 0,
            val_recognition_rate: 0.0,
            penalty_weights: vec![1.0; 36],
            rng_state_digest: 0,
        };
        save_checkpoint(dir.path(), &st, &tiny(), &meta).unwrap();

        let bigger = GeneratorConfig {
            base_channels: 16,
            ..tiny()
        };
        let mut st2 = ParamStore::new(&Device::Cpu, DType::F32, 21);
        Generator::new(&mut st2, &bigger).unwrap();
        let snapshot: Vec<f32> = st2
            .vars()
            .iter()
            .flat_map(|v| v.flatten_all().unwrap().to_vec1::<f32>().unwrap())
            .collect();
        assert!(load_weights(dir.path(), &mut st2).is_err());
        let after: Vec<f32> = st2
            .vars()
            .iter()
            .flat_map(|v| v.flatten_all().unwrap().to_vec1::<f32>().unwrap())
            .collect();
        assert_eq!(snapshot, after);
    }
}
