//! Differentiable SSIM with a Gaussian window; used by the dissimilarity loss,
//! the degradation pipeline, and the evaluation metrics alike.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the pixel values.
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window_size: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    /// Normalized Gaussian window as a (1, 1, w, w) convolution kernel.
    pub fn window(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let w = self.window_size;
        let half = (w as f64 - 1.0) / 2.0;
        let mut values = Vec::with_capacity(w * w);
        for y in 0..w {
            for x in 0..w {
                let dy = y as f64 - half;
                let dx = x as f64 - half;
                values.push((-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp());
            }
        }
        let sum: f64 = values.iter().sum();
        for v in &mut values {
            *v /= sum;
        }
        let t = Tensor::from_vec(values, (1, 1, w, w), device)?.to_dtype(dtype)?;
        Ok(t)
    }
}

/// Mean local SSIM over valid window positions for single-channel batches
/// of shape (B, 1, H, W). Differentiable w.r.t. both inputs.
pub fn ssim_luma(a: &Tensor, b: &Tensor, params: &SsimParams) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.dims()),
            got: format!("{:?}", b.dims()),
        });
    }
    let window = params.window(a.device(), a.dtype())?;
    let mu_a = a.conv2d(&window, 0, 1, 1, 1)?;
    let mu_b = b.conv2d(&window, 0, 1, 1, 1)?;
    let mu_aa = (&mu_a * &mu_a)?;
    let mu_bb = (&mu_b * &mu_b)?;
    let mu_ab = (&mu_a * &mu_b)?;
    let var_a = ((a * a)?.conv2d(&window, 0, 1, 1, 1)? - &mu_aa)?;
    let var_b = ((b * b)?.conv2d(&window, 0, 1, 1, 1)? - &mu_bb)?;
    let cov_ab = ((a * b)?.conv2d(&window, 0, 1, 1, 1)? - &mu_ab)?;
    let c1 = params.c1();
    let c2 = params.c2();
    let numerator = (((mu_ab * 2.0)? + c1)? * ((cov_ab * 2.0)? + c2)?)?;
    let denominator = (((mu_aa + mu_bb)? + c1)? * ((var_a + var_b)? + c2)?)?;
    let ssim_map = (numerator / denominator)?;
    Ok(ssim_map.mean_all()?)
}

/// SSIM of RGB batches (B, 3, H, W), computed on the per-pixel channel mean.
pub fn ssim_rgb(a: &Tensor, b: &Tensor, params: &SsimParams) -> Result<Tensor> {
    let la = a.mean_keepdim(1)?;
    let lb = b.mean_keepdim(1)?;
    ssim_luma(&la, &lb, params)
}

/// Scalar SSIM between two images of identical shape.
pub fn ssim_images(a: &ImageTensor, b: &ImageTensor, params: &SsimParams) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.height, a.width),
            got: format!("{}x{}", b.height, b.width),
        });
    }
    let device = Device::Cpu;
    let ta = a.to_chw_tensor(&device, DType::F64)?.unsqueeze(0)?;
    let tb = b.to_chw_tensor(&device, DType::F64)?.unsqueeze(0)?;
    Ok(ssim_rgb(&ta, &tb, params)?.to_scalar::<f64>()?)
}
