//! Named parameter storage with deterministic initialization and
//! safetensors round-trips.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Kaiming normal with the given fan-in.
    KaimingNormal { fan_in: usize },
    /// Normal with explicit standard deviation.
    Normal { std: f64 },
    Zeros,
}

/// Ordered collection of named parameters. Creation order is fixed by the
/// model constructors, which keeps optimizer state addressing deterministic.
pub struct ParamStore {
    device: Device,
    dtype: DType,
    rng: ChaCha8Rng,
    entries: Vec<(String, Var)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new(device: &Device, dtype: DType, seed: u64) -> Self {
        ParamStore {
            device: device.clone(),
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn var(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        if self.index.contains_key(name) {
            return Err(Error::CheckpointIncompatible(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let count: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; count],
            Init::KaimingNormal { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("valid std");
                (0..count).map(|_| normal.sample(&mut self.rng)).collect()
            }
            Init::Normal { std } => {
                let normal = Normal::new(0.0, std).expect("valid std");
                (0..count).map(|_| normal.sample(&mut self.rng)).collect()
            }
        };
        let tensor = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&tensor)?;
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), var.clone()));
        Ok(var)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn named_vars(&self) -> &[(String, Var)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn count_parameters(&self) -> usize {
        self.entries
            .iter()
            .map(|(_, v)| v.as_tensor().elem_count())
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .entries
            .iter()
            .map(|(name, var)| (name.clone(), var.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Load all parameters from a safetensors file. Every name and shape is
    /// validated before any variable is touched, so a mismatch leaves the
    /// model unchanged.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let loaded = candle_core::safetensors::load(path, &self.device)?;
        let mut staged = Vec::with_capacity(self.entries.len());
        for (name, var) in &self.entries {
            let tensor = loaded.get(name).ok_or_else(|| {
                Error::CheckpointIncompatible(format!("missing parameter {name:?} in {path:?}"))
            })?;
            if tensor.dims() != var.as_tensor().dims() {
                return Err(Error::CheckpointIncompatible(format!(
                    "parameter {name:?} has shape {:?}, expected {:?}",
                    tensor.dims(),
                    var.as_tensor().dims()
                )));
            }
            staged.push(tensor.to_dtype(self.dtype)?);
        }
        if loaded.len() != self.entries.len() {
            return Err(Error::CheckpointIncompatible(format!(
                "checkpoint has {} parameters, model expects {}",
                loaded.len(),
                self.entries.len()
            )));
        }
        for ((_, var), tensor) in self.entries.iter().zip(staged) {
            var.set(&tensor)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_in_seed() {
        let dev = Device::Cpu;
        let mut a = ParamStore::new(&dev, DType::F32, 9);
        let mut b = ParamStore::new(&dev, DType::F32, 9);
        let va = a.var("w", &[4, 3], Init::KaimingNormal { fan_in: 3 }).unwrap();
        let vb = b.var("w", &[4, 3], Init::KaimingNormal { fan_in: 3 }).unwrap();
        assert_eq!(
            va.as_tensor().to_vec2::<f32>().unwrap(),
            vb.as_tensor().to_vec2::<f32>().unwrap()
        );
    }

    #[test]
    fn save_load_round_trip() {
        let dev = Device::Cpu;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        let mut a = ParamStore::new(&dev, DType::F32, 1);
        a.var("w", &[2, 2], Init::Normal { std: 1.0 }).unwrap();
        a.save(&path).unwrap();

        let mut b = ParamStore::new(&dev, DType::F32, 2);
        b.var("w", &[2, 2], Init::Zeros).unwrap();
        b.load(&path).unwrap();
        assert_eq!(
            a.get("w").unwrap().as_tensor().to_vec2::<f32>().unwrap(),
            b.get("w").unwrap().as_tensor().to_vec2::<f32>().unwrap()
        );
    }

    #[test]
    fn load_shape_mismatch_fails_without_mutation() {
        let dev = Device::Cpu;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        let mut a = ParamStore::new(&dev, DType::F32, 1);
        a.var("w", &[2, 3], Init::Normal { std: 1.0 }).unwrap();
        a.save(&path).unwrap();

        let mut b = ParamStore::new(&dev, DType::F32, 2);
        b.var("w", &[2, 2], Init::Normal { std: 1.0 }).unwrap();
        let before = b.get("w").unwrap().as_tensor().to_vec2::<f32>().unwrap();
        assert!(b.load(&path).is_err());
        let after = b.get("w").unwrap().as_tensor().to_vec2::<f32>().unwrap();
        assert_eq!(before, after);
    }
}
