//! Adam with externally controlled learning rate and serializable moment
//! state, so an interrupted run resumes bit-for-bit.

use std::collections::HashMap;
use std::path::Path;

use candle_core::backprop::GradStore;
use candle_core::{Device, Tensor, Var};

use crate::error::{Error, Result};

pub struct Adam {
    params: Vec<(String, Var)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: Vec<(String, Var)>) -> Result<Self> {
        let m = params
            .iter()
            .map(|(_, p)| p.zeros_like())
            .collect::<candle_core::Result<Vec<_>>>()?;
        let v = params
            .iter()
            .map(|(_, p)| p.zeros_like())
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(Adam {
            params,
            m,
            v,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update with the given learning rate. Parameters without a
    /// gradient in `grads` keep their moments and values untouched.
    pub fn step(&mut self, lr: f64, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (_, p)) in self.params.iter().enumerate() {
            let Some(g) = grads.get(p) else { continue };
            // Gradients coming out of backward() still carry the op graph of
            // the step that produced them. Detach before folding them into the
            // moments, otherwise the moments keep every past step's graph
            // alive and memory grows without bound.
            let g = g.detach();
            self.m[i] = ((&self.m[i] * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            self.v[i] = ((&self.v[i] * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&self.m[i] / bc1)?;
            let v_hat = (&self.v[i] / bc2)?;
            let update = (m_hat * lr)?.div(&(v_hat.sqrt()? + self.eps)?)?;
            p.set(&p.sub(&update)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: HashMap<String, Tensor> = HashMap::new();
        for (i, (name, _)) in self.params.iter().enumerate() {
            tensors.insert(format!("m.{name}"), self.m[i].clone());
            tensors.insert(format!("v.{name}"), self.v[i].clone());
        }
        tensors.insert(
            "step".to_string(),
            Tensor::from_vec(vec![self.t as f64], 1, &Device::Cpu)?,
        );
        candle_core::safetensors::save(&tensors, path).map_err(Error::from)
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let device = self
            .params
            .first()
            .map(|(_, p)| p.device().clone())
            .unwrap_or(Device::Cpu);
        let tensors = candle_core::safetensors::load(path, &device)?;
        let mut m = Vec::with_capacity(self.params.len());
        let mut v = Vec::with_capacity(self.params.len());
        for (i, (name, _)) in self.params.iter().enumerate() {
            for (prefix, out) in [("m", &mut m), ("v", &mut v)] {
                let key = format!("{prefix}.{name}");
                let t = tensors.get(&key).ok_or_else(|| Error::CheckpointIncompatible(format!(
                    "optimizer state missing {key}"
                )))?;
                if t.dims() != self.m[i].dims() {
                    return Err(Error::CheckpointIncompatible(format!(
                        "optimizer state {key}: shape {:?} vs expected {:?}",
                        t.dims(),
                        self.m[i].dims()
                    )));
                }
                out.push(t.to_dtype(self.m[i].dtype())?);
            }
        }
        let step = tensors
            .get("step")
            .ok_or_else(|| {
                Error::CheckpointIncompatible("optimizer state missing step counter".into())
            })?
            .to_vec1::<f64>()?[0] as u64;
        self.m = m;
        self.v = v;
        self.t = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_loss(x: &Var) -> Tensor {
        // (x - 3)^2 summed
        x.affine(1.0, -3.0).unwrap().sqr().unwrap().sum_all().unwrap()
    }

    #[test]
    fn converges_on_a_quadratic() {
        let x = Var::from_vec(vec![0.0f64, 10.0], 2, &Device::Cpu).unwrap();
        let mut opt = Adam::new(vec![("x".into(), x.clone())]).unwrap();
        for _ in 0..2000 {
            let loss = quadratic_loss(&x);
            let grads = loss.backward().unwrap();
            opt.step(0.05, &grads).unwrap();
        }
        let vals = x.to_vec1::<f64>().unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-3 && (vals[1] - 3.0).abs() < 1e-3, "{vals:?}");
    }

    #[test]
    fn state_round_trip_resumes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("opt.safetensors");

        let run = |resume_at: Option<usize>| -> Vec<f64> {
            let x = Var::from_vec(vec![5.0f64, -2.0], 2, &Device::Cpu).unwrap();
            let mut opt = Adam::new(vec![("x".into(), x.clone())]).unwrap();
            for step in 0..20 {
                if resume_at == Some(step) {
                    // Swap in a fresh optimizer restored from disk.
                    let mut fresh = Adam::new(vec![("x".into(), x.clone())]).unwrap();
                    fresh.load(&path).unwrap();
                    opt = fresh;
                }
                let loss = quadratic_loss(&x);
                opt.step(0.1, &loss.backward().unwrap()).unwrap();
                if resume_at.is_none() && step == 9 {
                    opt.save(&path).unwrap();
                }
            }
            x.to_vec1::<f64>().unwrap()
        };

        let uninterrupted = run(None);
        // Second run restores the saved moments at step 10; the variable value
        // differs though, so replay the first 10 steps first.
        let x = Var::from_vec(vec![5.0f64, -2.0], 2, &Device::Cpu).unwrap();
        let mut opt = Adam::new(vec![("x".into(), x.clone())]).unwrap();
        for _ in 0..10 {
            let loss = quadratic_loss(&x);
            opt.step(0.1, &loss.backward().unwrap()).unwrap();
        }
        let mut restored = Adam::new(vec![("x".into(), x.clone())]).unwrap();
        restored.load(&path).unwrap();
        assert_eq!(restored.step_count(), 10);
        for _ in 10..20 {
            let loss = quadratic_loss(&x);
            restored.step(0.1, &loss.backward().unwrap()).unwrap();
        }
        assert_eq!(uninterrupted, x.to_vec1::<f64>().unwrap());
    }

    #[test]
    fn missing_state_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("opt.safetensors");
        let x = Var::from_vec(vec![1.0f64], 1, &Device::Cpu).unwrap();
        let opt = Adam::new(vec![("x".into(), x.clone())]).unwrap();
        opt.save(&path).unwrap();

        let y = Var::from_vec(vec![1.0f64], 1, &Device::Cpu).unwrap();
        let mut other = Adam::new(vec![("y".into(), y)]).unwrap();
        assert!(other.load(&path).is_err());
    }
}
