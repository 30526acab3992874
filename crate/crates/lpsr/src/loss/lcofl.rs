//! The layout and character oriented focal loss: weighted classification term,
//! layout penalty, and SSIM dissimilarity term.
//!
//! The tensor functions accept batched inputs — probabilities of shape
//! (B, K, C), ground-truth indices of shape (B, K) — and return scalar graph
//! nodes so gradients reach both the probabilities and the super-resolved
//! images. Sample-level wrappers delegate to the same implementations.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, LpLabel, NUM_CLASSES, PLATE_LEN};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::loss::ssim::{ssim_rgb, SsimParams};
use crate::loss::weights::PenaltyWeights;

/// Floor applied inside the logarithm of the classification loss.
pub const LOG_EPS: f64 = 1e-12;

/// How the layout penalty treats the probability rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// Differentiable: beta times the probability mass on the wrong
    /// character class at each position.
    Soft,
    /// Argmax decode, beta per misplaced position. Used for reporting.
    Hard,
}

/// K×C row-stochastic matrix of per-position character probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    rows: Vec<Vec<f64>>,
}

impl ClassProbabilities {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = ClassProbabilities { rows };
        p.validate()?;
        Ok(p)
    }

    pub fn one_hot(indices: &[usize; PLATE_LEN]) -> Self {
        let rows = indices
            .iter()
            .map(|&i| {
                let mut row = vec![0.0; NUM_CLASSES];
                row[i] = 1.0;
                row
            })
            .collect();
        ClassProbabilities { rows }
    }

    pub fn uniform() -> Self {
        ClassProbabilities {
            rows: vec![vec![1.0 / NUM_CLASSES as f64; NUM_CLASSES]; PLATE_LEN],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != PLATE_LEN {
            return Err(Error::ShapeMismatch {
                expected: format!("{PLATE_LEN} rows"),
                got: format!("{} rows", self.rows.len()),
            });
        }
        for (k, row) in self.rows.iter().enumerate() {
            if row.len() != NUM_CLASSES {
                return Err(Error::ShapeMismatch {
                    expected: format!("{NUM_CLASSES} classes"),
                    got: format!("{} classes in row {k}", row.len()),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-5 || row.iter().any(|&v| v < 0.0) {
                return Err(Error::ShapeMismatch {
                    expected: "row-stochastic probabilities".into(),
                    got: format!("row {k} sums to {sum}"),
                });
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let flat: Vec<f64> = self.rows.iter().flatten().copied().collect();
        let t = Tensor::from_vec(flat, (PLATE_LEN, NUM_CLASSES), device)?.to_dtype(dtype)?;
        Ok(t)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (k, c) = t.dims2()?;
        if k != PLATE_LEN || c != NUM_CLASSES {
            return Err(Error::ShapeMismatch {
                expected: format!("{PLATE_LEN}x{NUM_CLASSES}"),
                got: format!("{k}x{c}"),
            });
        }
        ClassProbabilities::from_rows(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
    }

    /// Per-row argmax; the lowest index wins ties.
    pub fn argmax_indices(&self) -> [usize; PLATE_LEN] {
        let mut out = [0usize; PLATE_LEN];
        for (slot, row) in out.iter_mut().zip(&self.rows) {
            *slot = argmax_first(row);
        }
        out
    }
}

fn argmax_first<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Decode a probability matrix to its 7-character string.
pub fn argmax_decode(probs: &ClassProbabilities, alphabet: &Alphabet) -> String {
    probs
        .argmax_indices()
        .iter()
        .map(|&i| alphabet.symbol(i))
        .collect()
}

/// Decode a batched (B, K, C) probability tensor.
pub fn decode_batch(probs: &Tensor, alphabet: &Alphabet) -> Result<Vec<String>> {
    let data = probs.to_dtype(DType::F32)?.to_vec3::<f32>()?;
    Ok(data
        .iter()
        .map(|rows| rows.iter().map(|r| alphabet.symbol(argmax_first(r))).collect())
        .collect())
}

fn gt_tensor(gt: &[[usize; PLATE_LEN]], device: &Device) -> Result<Tensor> {
    let flat: Vec<u32> = gt.iter().flatten().map(|&i| i as u32).collect();
    Ok(Tensor::from_vec(flat, (gt.len(), PLATE_LEN), device)?)
}

/// Weighted cross-entropy over a batch: mean over samples of
/// −(1/K) Σ_k w[gt_k] · log p_k(gt_k).
pub fn classification_loss_t(probs: &Tensor, gt: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (b, k, _c) = probs.dims3()?;
    let (gb, gk) = gt.dims2()?;
    if (gb, gk) != (b, k) {
        return Err(Error::ShapeMismatch {
            expected: format!("gt of shape {b}x{k}"),
            got: format!("{gb}x{gk}"),
        });
    }
    let logp = probs.clamp(LOG_EPS, 1e12)?.log()?;
    let picked = logp.gather(&gt.unsqueeze(2)?, 2)?.squeeze(2)?; // (B, K)
    let w = weights
        .to_dtype(probs.dtype())?
        .index_select(&gt.flatten_all()?, 0)?
        .reshape((b, k))?;
    let per_sample = (picked * w)?.sum(1)?; // (B,)
    let loss = (per_sample.mean(0)? * (-1.0 / k as f64))?;
    Ok(loss)
}

fn class_mask(device: &Device, dtype: DType, digit: bool) -> Result<Tensor> {
    let alphabet = Alphabet;
    let values: Vec<f32> = (0..NUM_CLASSES)
        .map(|i| {
            if alphabet.is_digit(i) == digit {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(Tensor::from_vec(values, NUM_CLASSES, device)?.to_dtype(dtype)?)
}

/// Differentiable layout penalty over a batch: at each position, beta times
/// the probability mass on the wrong character class (digit mass at ground
/// truth letters and vice versa), summed over positions, mean over samples.
pub fn layout_penalty_soft_t(probs: &Tensor, gt: &Tensor, beta: f64) -> Result<Tensor> {
    let (b, k, c) = probs.dims3()?;
    let device = probs.device();
    let dtype = probs.dtype();
    let digit_mask = class_mask(device, dtype, true)?;
    let letter_mask = class_mask(device, dtype, false)?;
    let digit_mass = probs.broadcast_mul(&digit_mask.reshape((1, 1, c))?)?.sum(2)?;
    let letter_mass = probs.broadcast_mul(&letter_mask.reshape((1, 1, c))?)?.sum(2)?;
    let gt_is_letter = letter_mask
        .index_select(&gt.flatten_all()?, 0)?
        .reshape((b, k))?;
    let gt_is_digit = ((&gt_is_letter * -1.0)? + 1.0)?;
    let wrong_mass = ((gt_is_letter * digit_mass)? + (gt_is_digit * letter_mass)?)?;
    let per_sample = wrong_mass.sum(1)?;
    Ok((per_sample.mean(0)? * beta)?)
}

/// Hard layout penalty for a single decoded pair of index sequences.
pub fn layout_penalty_hard(
    pred: &[usize; PLATE_LEN],
    gt: &[usize; PLATE_LEN],
    beta: f64,
) -> f64 {
    beta * layout_violations(pred, gt) as f64
}

/// Number of positions where a digit is predicted at a ground-truth letter
/// position or a letter at a ground-truth digit position.
pub fn layout_violations(pred: &[usize; PLATE_LEN], gt: &[usize; PLATE_LEN]) -> usize {
    let alphabet = Alphabet;
    pred.iter()
        .zip(gt)
        .filter(|(&p, &g)| alphabet.is_digit(p) != alphabet.is_digit(g))
        .count()
}

/// Dissimilarity loss: (1 − SSIM(sr, hr)) / 2.
pub fn dissimilarity_loss_t(sr: &Tensor, hr: &Tensor, params: &SsimParams) -> Result<Tensor> {
    let s = ssim_rgb(sr, hr, params)?;
    Ok((((s * -1.0)? + 1.0)? * 0.5)?)
}

/// The three LCOFL terms and their sum as live graph nodes.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub l_c: Tensor,
    pub l_p: Tensor,
    pub l_s: Tensor,
    pub total: Tensor,
}

impl LossBreakdown {
    pub fn values(&self) -> Result<LossValues> {
        Ok(LossValues {
            l_c: self.l_c.to_dtype(DType::F64)?.to_scalar::<f64>()?,
            l_p: self.l_p.to_dtype(DType::F64)?.to_scalar::<f64>()?,
            l_s: self.l_s.to_dtype(DType::F64)?.to_scalar::<f64>()?,
            total: self.total.to_dtype(DType::F64)?.to_scalar::<f64>()?,
        })
    }
}

/// Plain numeric loss breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub l_c: f64,
    pub l_p: f64,
    pub l_s: f64,
    pub total: f64,
}

/// Composite LCOFL over a batch: classification + soft layout
/// penalty + dissimilarity. `probs` (B, K, C), `gt` (B, K), `sr`/`hr`
/// (B, 3, H, W), `weights` (C,).
pub fn lcofl_t(
    probs: &Tensor,
    gt: &Tensor,
    sr: &Tensor,
    hr: &Tensor,
    weights: &Tensor,
    beta: f64,
    ssim_params: &SsimParams,
) -> Result<LossBreakdown> {
    let l_c = classification_loss_t(probs, gt, weights)?;
    let l_p = layout_penalty_soft_t(probs, gt, beta)?;
    let l_s = dissimilarity_loss_t(sr, hr, ssim_params)?;
    let total = ((&l_c + &l_p)? + &l_s)?;
    Ok(LossBreakdown { l_c, l_p, l_s, total })
}

// ---- sample-level wrappers -------------------------------------------------

fn single_probs_tensor(probs: &ClassProbabilities, device: &Device) -> Result<Tensor> {
    Ok(probs.to_tensor(device, DType::F64)?.unsqueeze(0)?)
}

/// Single-sample classification loss.
pub fn classification_loss(
    probs: &ClassProbabilities,
    gt: &[usize; PLATE_LEN],
    weights: &PenaltyWeights,
) -> Result<f64> {
    probs.validate()?;
    let device = Device::Cpu;
    let p = single_probs_tensor(probs, &device)?;
    let g = gt_tensor(&[*gt], &device)?;
    let w = weights.to_tensor(&device, DType::F64)?;
    Ok(classification_loss_t(&p, &g, &w)?.to_scalar::<f64>()?)
}

/// Single-sample layout penalty in the requested mode.
pub fn layout_penalty(
    probs: &ClassProbabilities,
    gt: &[usize; PLATE_LEN],
    beta: f64,
    mode: PenaltyMode,
) -> Result<f64> {
    probs.validate()?;
    assert!(beta >= 0.0);
    match mode {
        PenaltyMode::Hard => Ok(layout_penalty_hard(&probs.argmax_indices(), gt, beta)),
        PenaltyMode::Soft => {
            let device = Device::Cpu;
            let p = single_probs_tensor(probs, &device)?;
            let g = gt_tensor(&[*gt], &device)?;
            Ok(layout_penalty_soft_t(&p, &g, beta)?.to_scalar::<f64>()?)
        }
    }
}

/// Single-pair dissimilarity loss.
pub fn dissimilarity_loss(
    sr: &ImageTensor,
    hr: &ImageTensor,
    params: &SsimParams,
) -> Result<f64> {
    let s = crate::loss::ssim::ssim_images(sr, hr, params)?;
    Ok((1.0 - s) / 2.0)
}

/// Single-sample composite loss. Soft layout penalty, matching the
/// training objective.
pub fn lcofl(
    probs: &ClassProbabilities,
    gt_label: &LpLabel,
    sr: &ImageTensor,
    hr: &ImageTensor,
    weights: &PenaltyWeights,
    alphabet: &Alphabet,
    beta: f64,
    ssim_params: &SsimParams,
) -> Result<LossValues> {
    let gt = crate::alphabet::encode_label(gt_label, alphabet)?;
    let l_c = classification_loss(probs, &gt, weights)?;
    let l_p = layout_penalty(probs, &gt, beta, PenaltyMode::Soft)?;
    let l_s = dissimilarity_loss(sr, hr, ssim_params)?;
    Ok(LossValues {
        l_c,
        l_p,
        l_s,
        total: l_c + l_p + l_s,
    })
}
