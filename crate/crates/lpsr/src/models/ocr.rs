//! Two OCR networks behind one forward contract: a sequence-slot decoder used
//! as the training discriminator, and a multi-branch fully connected model
//! reserved for evaluation. Both map a 32x96 RGB image to a 7x36
//! row-stochastic matrix.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::alphabet::{NUM_CLASSES, PLATE_LEN};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, HR_HEIGHT, HR_WIDTH};
use crate::loss::ClassProbabilities;
use crate::models::layers::{Conv2d, Linear};
use crate::models::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcrRole {
    Discriminator,
    Evaluator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStyle {
    SequenceSlots,
    FcBranches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default = "OcrConfig::discriminator")]
pub struct OcrConfig {
    pub role: OcrRole,
    pub decode_length: usize,
    pub num_classes: usize,
    pub branch_style: BranchStyle,
    pub channels: usize,
}

impl OcrConfig {
    pub fn discriminator() -> Self {
        OcrConfig {
            role: OcrRole::Discriminator,
            decode_length: PLATE_LEN,
            num_classes: NUM_CLASSES,
            branch_style: BranchStyle::SequenceSlots,
            channels: 48,
        }
    }

    pub fn evaluator() -> Self {
        OcrConfig {
            role: OcrRole::Evaluator,
            decode_length: PLATE_LEN,
            num_classes: NUM_CLASSES,
            branch_style: BranchStyle::FcBranches,
            channels: 48,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.decode_length != PLATE_LEN || self.num_classes != NUM_CLASSES {
            return Err(Error::Config(format!(
                "OCR must decode {PLATE_LEN} slots over {NUM_CLASSES} classes, got {}x{}",
                self.decode_length, self.num_classes
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("OCR channels must be positive".into()));
        }
        Ok(())
    }
}

enum Head {
    /// Width-wise pooled slots, one linear shared across slots.
    SequenceSlots { slot_fc: Linear },
    /// Flattened trunk features, one linear per plate position.
    FcBranches {
        shared_fc: Linear,
        branches: Vec<Linear>,
    },
}

pub struct OcrNet {
    config: OcrConfig,
    conv1: Conv2d,
    conv2: Conv2d,
    conv3: Conv2d,
    head: Head,
}

/// Trunk output resolution after two stride-2 convs on 32x96.
const FH: usize = 8;
const FW: usize = 24;
const FC_HIDDEN: usize = 192;

impl OcrNet {
    pub fn new(store: &mut ParamStore, config: &OcrConfig) -> Result<Self> {
        config.validate()?;
        let prefix = match config.role {
            OcrRole::Discriminator => "disc",
            OcrRole::Evaluator => "eval",
        };
        let c = config.channels;
        let conv1 = Conv2d::new(store, &format!("{prefix}.conv1"), 3, c / 2, 3, 1, 2, 1)?;
        let conv2 = Conv2d::new(store, &format!("{prefix}.conv2"), c / 2, c, 3, 1, 2, 1)?;
        let conv3 = Conv2d::new(store, &format!("{prefix}.conv3"), c, c, 3, 1, 1, 1)?;
        // Small output std keeps untrained predictions near uniform.
        let head = match config.branch_style {
            BranchStyle::SequenceSlots => Head::SequenceSlots {
                slot_fc: Linear::new(
                    store,
                    &format!("{prefix}.slot_fc"),
                    c,
                    NUM_CLASSES,
                    Some(0.01),
                )?,
            },
            BranchStyle::FcBranches => {
                let shared_fc = Linear::new(
                    store,
                    &format!("{prefix}.shared_fc"),
                    c * FH * FW,
                    FC_HIDDEN,
                    None,
                )?;
                let mut branches = Vec::with_capacity(PLATE_LEN);
                for k in 0..PLATE_LEN {
                    branches.push(Linear::new(
                        store,
                        &format!("{prefix}.branch{k}"),
                        FC_HIDDEN,
                        NUM_CLASSES,
                        Some(0.01),
                    )?);
                }
                Head::FcBranches {
                    shared_fc,
                    branches,
                }
            }
        };
        Ok(OcrNet {
            config: config.clone(),
            conv1,
            conv2,
            conv3,
            head,
        })
    }

    pub fn config(&self) -> &OcrConfig {
        &self.config
    }

    fn trunk(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(x)?.relu()?;
        let h = self.conv2.forward(&h)?.relu()?;
        Ok(self.conv3.forward(&h)?.relu()?)
    }

    /// (B, 3, 32, 96) -> (B, 7, 36) rows summing to one.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        if c != 3 || h != HR_HEIGHT || w != HR_WIDTH {
            return Err(Error::ShapeMismatch {
                expected: format!("(B, 3, {HR_HEIGHT}, {HR_WIDTH})"),
                got: format!("(B, {c}, {h}, {w})"),
            });
        }
        let feat = self.trunk(x)?; // (B, C, FH, FW)
        let logits = match &self.head {
            Head::SequenceSlots { slot_fc } => {
                let cols = feat.mean(2)?; // (B, C, FW)
                // Average the trunk columns belonging to each of the 7 slots.
                let mut slots = Vec::with_capacity(PLATE_LEN);
                for k in 0..PLATE_LEN {
                    let lo = k * FW / PLATE_LEN;
                    let hi = (k + 1) * FW / PLATE_LEN;
                    let slot = cols.narrow(2, lo, hi - lo)?.mean(2)?; // (B, C)
                    slots.push(slot.unsqueeze(1)?);
                }
                let slots = Tensor::cat(&slots, 1)?; // (B, 7, C)
                slot_fc.forward(&slots)?
            }
            Head::FcBranches {
                shared_fc,
                branches,
            } => {
                let flat = feat.reshape((b, self.config.channels * FH * FW))?;
                let hidden = shared_fc.forward(&flat)?.relu()?;
                let mut outs = Vec::with_capacity(PLATE_LEN);
                for branch in branches {
                    outs.push(branch.forward(&hidden)?.unsqueeze(1)?);
                }
                Tensor::cat(&outs, 1)?
            }
        };
        Ok(candle_nn::ops::softmax(&logits, 2)?)
    }

    /// Single-image convenience wrapper.
    pub fn read_plate(&self, img: &ImageTensor) -> Result<ClassProbabilities> {
        img.expect_shape(HR_HEIGHT, HR_WIDTH)?;
        let device = self.conv1.weight().device().clone();
        let x = img
            .to_chw_tensor(&device, self.conv1.weight().dtype())?
            .unsqueeze(0)?;
        let probs = self.forward(&x)?.squeeze(0)?;
        ClassProbabilities::from_tensor(&probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn nets() -> Vec<OcrNet> {
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 5);
        vec![
            OcrNet::new(&mut st, &OcrConfig::discriminator()).unwrap(),
            OcrNet::new(&mut st, &OcrConfig::evaluator()).unwrap(),
        ]
    }

    #[test]
    fn rows_are_stochastic() {
        for net in nets() {
            let x = Tensor::rand(0f32, 1f32, (3, 3, 32, 96), &Device::Cpu).unwrap();
            let p = net.forward(&x).unwrap();
            assert_eq!(p.dims(), &[3, 7, 36]);
            let sums = p.sum(2).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            for s in sums {
                assert!((s - 1.0).abs() < 1e-5, "row sum {s}");
            }
        }
    }

    #[test]
    fn untrained_rows_are_near_uniform() {
        for seed in 0..20u64 {
            let mut st = ParamStore::new(&Device::Cpu, DType::F32, seed);
            let disc = OcrNet::new(&mut st, &OcrConfig::discriminator()).unwrap();
            let eval = OcrNet::new(&mut st, &OcrConfig::evaluator()).unwrap();
            let x = Tensor::rand(0f32, 1f32, (1, 3, 32, 96), &Device::Cpu).unwrap();
            for net in [&disc, &eval] {
                let p = net.forward(&x).unwrap();
                let max = p.max_all().unwrap().to_scalar::<f32>().unwrap();
                assert!(max < 0.5, "seed {seed}: max prob {max}");
            }
        }
    }

    #[test]
    fn rejects_lr_input() {
        for net in nets() {
            let x = Tensor::zeros((1, 3, 16, 48), DType::F32, &Device::Cpu).unwrap();
            assert!(net.forward(&x).is_err());
        }
    }
}
