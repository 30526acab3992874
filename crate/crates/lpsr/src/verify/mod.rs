//! Independent oracles and numeric checks: a naive sliding-window SSIM
//! written without tensors, a central finite-difference gradient checker,
//! and a brute-force layout penalty scan. These deliberately share no code
//! with the implementations they check.

use candle_core::{DType, Device, Tensor, Var};

use crate::alphabet::PLATE_LEN;
use crate::error::Result;
use crate::image::ImageTensor;
use crate::loss::SsimParams;

/// SSIM of two images computed with plain nested loops over every valid
/// window position on the luminance channel.
pub fn ssim_reference(a: &ImageTensor, b: &ImageTensor, params: &SsimParams) -> f64 {
    let w = params.window_size;
    let half = w / 2;
    let (h, wid) = (a.height, a.width);
    assert_eq!((h, wid), (b.height, b.width));

    // Same Gaussian the fast path uses, rebuilt from scratch.
    let mut window = vec![0.0f64; w * w];
    let mut sum = 0.0;
    for y in 0..w {
        for x in 0..w {
            let dy = y as f64 - half as f64;
            let dx = x as f64 - half as f64;
            let v = (-(dy * dy + dx * dx) / (2.0 * params.sigma * params.sigma)).exp();
            window[y * w + x] = v;
            sum += v;
        }
    }
    for v in &mut window {
        *v /= sum;
    }

    let luma = |img: &ImageTensor, y: usize, x: usize| -> f64 {
        let p = img.pixel(y, x);
        (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0
    };

    let c1 = (params.k1 * params.data_range).powi(2);
    let c2 = (params.k2 * params.data_range).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for cy in half..h - half {
        for cx in half..wid - half {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            for y in 0..w {
                for x in 0..w {
                    let wv = window[y * w + x];
                    mu_a += wv * luma(a, cy + y - half, cx + x - half);
                    mu_b += wv * luma(b, cy + y - half, cx + x - half);
                }
            }
            let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
            for y in 0..w {
                for x in 0..w {
                    let wv = window[y * w + x];
                    let da = luma(a, cy + y - half, cx + x - half) - mu_a;
                    let db = luma(b, cy + y - half, cx + x - half) - mu_b;
                    var_a += wv * da * da;
                    var_b += wv * db * db;
                    cov += wv * da * db;
                }
            }
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    total / count as f64
}

/// Brute-force layout violation count: walk the positions and compare the
/// character kinds directly, without the batched mask machinery.
pub fn layout_violations_bruteforce(pred: &[usize; PLATE_LEN], gt: &[usize; PLATE_LEN]) -> usize {
    let mut count = 0;
    for k in 0..PLATE_LEN {
        let pred_is_digit = pred[k] < 10;
        let gt_is_digit = gt[k] < 10;
        if pred_is_digit != gt_is_digit {
            count += 1;
        }
    }
    count
}

/// Result of a gradient comparison.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compare analytic gradients of a scalar-valued function against central
/// finite differences at 64-bit. `probe` limits how many elements are
/// perturbed (evenly spaced through the input) so large inputs stay cheap.
pub fn grad_check<F>(f: F, x0: &[f64], shape: &[usize], eps: f64, probe: usize) -> Result<GradCheck>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let device = Device::Cpu;
    let x = Var::from_vec(x0.to_vec(), shape, &device)?;
    let loss = f(x.as_tensor())?;
    let grads = loss.backward()?;
    let analytic: Vec<f64> = match grads.get(&x) {
        Some(g) => g.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?,
        None => vec![0.0; x0.len()],
    };

    let n = x0.len();
    let step = (n / probe.max(1)).max(1);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for i in (0..n).step_by(step) {
        let mut plus = x0.to_vec();
        let mut minus = x0.to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let fp = f(&Tensor::from_vec(plus, shape, &device)?)?
            .to_dtype(DType::F64)?
            .to_scalar::<f64>()?;
        let fm = f(&Tensor::from_vec(minus, shape, &device)?)?
            .to_dtype(DType::F64)?
            .to_scalar::<f64>()?;
        let numeric = (fp - fm) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        max_rel = max_rel.max(rel);
        checked += 1;
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_check_accepts_a_correct_gradient() {
        // f(x) = sum(x^2), gradient 2x.
        let x0: Vec<f64> = (0..12).map(|i| i as f64 * 0.3 - 1.5).collect();
        let r = grad_check(
            |x| Ok(x.sqr()?.sum_all()?),
            &x0,
            &[3, 4],
            1e-5,
            12,
        )
        .unwrap();
        assert_eq!(r.checked, 12);
        assert!(r.max_rel_error < 1e-7, "{}", r.max_rel_error);
    }

    #[test]
    fn grad_check_flags_a_wrong_gradient() {
        // Detached path: analytic gradient is zero, numeric is not.
        let x0 = vec![0.5f64; 4];
        let r = grad_check(
            |x| Ok(x.detach().sqr()?.sum_all()?),
            &x0,
            &[4],
            1e-5,
            4,
        )
        .unwrap();
        assert!(r.max_rel_error > 0.5, "{}", r.max_rel_error);
    }

    #[test]
    fn reference_ssim_is_one_for_identical_images() {
        let img = ImageTensor::from_fn(20, 20, |y, x| {
            let v = ((y * 7 + x * 3) % 13) as f32 / 13.0;
            [v, v * 0.5, 1.0 - v]
        });
        let s = ssim_reference(&img, &img, &SsimParams::default());
        assert!((s - 1.0).abs() < 1e-12);
    }
}
