//! Iterative degradation: Gaussian noise plus bicubic down/up round trips
//! until the SSIM against the original HR image drops below the threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, HR_HEIGHT, HR_WIDTH, LR_HEIGHT, LR_WIDTH};
use crate::loss::{ssim_images, SsimParams};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeParams {
    /// Stop once SSIM(degraded, hr) falls below this value.
    pub threshold: f64,
    pub max_iters: usize,
    /// Per-iteration noise sigma is drawn uniformly from this range.
    pub sigma_min: f32,
    pub sigma_max: f32,
}

impl Default for DegradeParams {
    fn default() -> Self {
        DegradeParams {
            threshold: 0.1,
            max_iters: 150,
            sigma_min: 0.06,
            sigma_max: 0.18,
        }
    }
}

fn quantize_8bit(img: &ImageTensor) -> ImageTensor {
    let data = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
        .collect();
    ImageTensor::new(img.height, img.width, data).expect("same length")
}

/// Degrade a 32x96 HR image until the bicubic-upscaled LR falls below the
/// SSIM threshold. At least one iteration always runs. Returns the 16x48 LR
/// image (already quantized to the 8-bit grid it will be stored on) and the
/// achieved SSIM. Deterministic in (hr, params, seed).
pub fn degrade(
    hr: &ImageTensor,
    params: &DegradeParams,
    ssim_params: &SsimParams,
    rng_seed: u64,
) -> Result<(ImageTensor, f64)> {
    hr.expect_shape(HR_HEIGHT, HR_WIDTH)?;
    assert!(
        params.threshold > 0.0 && params.threshold < 1.0 + 1e-12,
        "threshold must be in (0, 1]"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut current = hr.clone();
    let mut last_ssim = 1.0;
    for _ in 0..params.max_iters {
        let sigma = rng.gen_range(params.sigma_min..=params.sigma_max);
        let normal = Normal::new(0.0f32, sigma).expect("sigma > 0");
        let mut add_noise = |img: &ImageTensor| -> Result<ImageTensor> {
            let data: Vec<f32> = img
                .data()
                .iter()
                .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            ImageTensor::new(img.height, img.width, data)
        };
        // Noise is applied at both scales: the bicubic round trip filters
        // most HR-scale noise away, while LR-scale noise survives it.
        let noisy = add_noise(&current)?;
        let lr = quantize_8bit(&add_noise(&noisy.resize_bicubic(LR_HEIGHT, LR_WIDTH))?);
        current = lr.resize_bicubic(HR_HEIGHT, HR_WIDTH);
        last_ssim = ssim_images(&current, hr, ssim_params)?;
        if last_ssim < params.threshold {
            return Ok((lr, last_ssim));
        }
    }
    Err(Error::DegradationFailed {
        threshold: params.threshold,
        iters: params.max_iters,
        last_ssim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{LayoutId, LpLabel};
    use crate::data::render::{render_plate, RenderStyle};

    fn plate() -> ImageTensor {
        let label = LpLabel::new("ABC1234", LayoutId::Brazilian).unwrap();
        render_plate(&label, &RenderStyle::default(), 3).unwrap()
    }

    #[test]
    fn reaches_threshold_on_a_natural_plate() {
        let hr = plate();
        let (lr, ssim) = degrade(
            &hr,
            &DegradeParams::default(),
            &SsimParams::default(),
            42,
        )
        .unwrap();
        assert!(ssim < 0.1, "achieved ssim {ssim}");
        assert_eq!((lr.height, lr.width), (LR_HEIGHT, LR_WIDTH));
    }

    #[test]
    fn threshold_one_still_runs_one_iteration() {
        let hr = plate();
        let params = DegradeParams {
            threshold: 1.0,
            max_iters: 50,
            ..DegradeParams::default()
        };
        let (lr, ssim) = degrade(&hr, &params, &SsimParams::default(), 5).unwrap();
        // SSIM(hr, hr) = 1 is not < 1, so the first iteration's output must
        // be returned with its real (degraded) SSIM.
        assert!(ssim < 1.0);
        assert_eq!((lr.height, lr.width), (LR_HEIGHT, LR_WIDTH));
    }

    #[test]
    fn degrade_is_deterministic() {
        let hr = plate();
        let p = DegradeParams::default();
        let s = SsimParams::default();
        let (lr_a, ssim_a) = degrade(&hr, &p, &s, 7).unwrap();
        let (lr_b, ssim_b) = degrade(&hr, &p, &s, 7).unwrap();
        assert_eq!(lr_a, lr_b);
        assert_eq!(ssim_a, ssim_b);
    }

    #[test]
    fn impossible_threshold_errors_with_last_ssim() {
        let hr = plate();
        let params = DegradeParams {
            threshold: 1e-6,
            max_iters: 3,
            ..DegradeParams::default()
        };
        match degrade(&hr, &params, &SsimParams::default(), 1) {
            Err(Error::DegradationFailed { last_ssim, iters, .. }) => {
                assert_eq!(iters, 3);
                assert!(last_ssim > 0.0);
            }
            other => panic!("expected degradation failure, got {other:?}"),
        }
    }

    #[test]
    fn stored_pair_recheck_matches_loop_check() {
        // The LR returned is already on the 8-bit grid, so re-upscaling it
        // reproduces the loop's SSIM operand exactly.
        let hr = plate();
        let p = DegradeParams::default();
        let s = SsimParams::default();
        let (lr, ssim) = degrade(&hr, &p, &s, 11).unwrap();
        let recheck = ssim_images(&lr.resize_bicubic(HR_HEIGHT, HR_WIDTH), &hr, &s).unwrap();
        assert!((recheck - ssim).abs() < 1e-12);
    }
}
