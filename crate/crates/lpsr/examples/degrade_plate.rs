//! Render one plate and degrade it until the bicubic upscale of the
//! low-resolution result drops below SSIM 0.1 against the original.
//!
//!     cargo run --example degrade_plate

use lpsr::alphabet::{LayoutId, LpLabel};
use lpsr::data::{degrade, DegradeParams, RenderStyle};
use lpsr::image::{HR_HEIGHT, HR_WIDTH};
use lpsr::loss::{ssim_images, SsimParams};

fn main() -> lpsr::Result<()> {
    let label = LpLabel::new("ABC1D23", LayoutId::Mercosur)?;
    let hr = lpsr::data::render_plate(&label, &RenderStyle::default(), 7)?;
    let params = DegradeParams::default();
    let ssim = SsimParams::default();
    let (lr, achieved) = degrade(&hr, &params, &ssim, 7)?;
    println!("plate '{}' rendered at {}x{}", label.text, hr.height, hr.width);
    println!("degraded to {}x{}, SSIM {achieved:.4} (threshold {})", lr.height, lr.width, params.threshold);

    // The SSIM the pipeline reports is measured against the bicubic upscale
    // of the low-resolution image, i.e. what a naive enlargement recovers.
    let upscaled = lr.resize_bicubic(HR_HEIGHT, HR_WIDTH);
    let check = ssim_images(&upscaled, &hr, &ssim)?;
    println!("recomputed SSIM of bicubic upscale: {check:.4}");

    let dir = std::env::temp_dir().join("lpsr_example_degrade");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    hr.save_png(dir.join("hr.png"))?;
    lr.save_png(dir.join("lr.png"))?;
    upscaled.save_png(dir.join("lr_bicubic.png"))?;
    println!("images written to {}", dir.display());
    Ok(())
}
