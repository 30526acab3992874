//! Synthetic plate renderer: monospaced glyphs over randomized background
//! color pairs with brightness variation and mild affine jitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, LpLabel};
use crate::data::font::{glyph_pixel, GLYPH_COLS, GLYPH_ROWS};
use crate::error::Result;
use crate::image::{ImageTensor, HR_HEIGHT, HR_WIDTH};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    /// Candidate (background, foreground) color pairs.
    pub palettes: Vec<([f32; 3], [f32; 3])>,
    /// Global brightness drawn from `1 ± brightness_jitter`.
    pub brightness_jitter: f32,
    /// Maximum rotation/shear magnitude of the affine warp, in radians.
    pub affine_jitter: f32,
    /// Maximum per-character translation, in pixels.
    pub char_jitter_px: i32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            palettes: vec![
                // Brazilian-style gray plate, Mercosur-style white plate,
                // plus darker variants for lighting diversity.
                ([0.75, 0.75, 0.75], [0.08, 0.08, 0.08]),
                ([0.92, 0.92, 0.92], [0.05, 0.05, 0.10]),
                ([0.65, 0.68, 0.72], [0.10, 0.10, 0.10]),
                ([0.85, 0.82, 0.70], [0.12, 0.10, 0.08]),
            ],
            brightness_jitter: 0.15,
            affine_jitter: 0.03,
            char_jitter_px: 1,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

const GLYPH_SCALE: usize = 2;
const CHAR_GAP: usize = 2;

/// Render the 7 characters of `label` onto an HR-resolution (32x96) plate.
/// Deterministic in (label, style, seed).
pub fn render_plate(label: &LpLabel, style: &RenderStyle, rng_seed: u64) -> Result<ImageTensor> {
    label.validate()?;
    let alphabet = Alphabet;
    let classes: Vec<usize> = label
        .chars()
        .map(|c| alphabet.class_of(c))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ fnv1a(label.text.as_bytes()));
    let (bg, fg) = style.palettes[rng.gen_range(0..style.palettes.len())];
    let brightness = 1.0 + rng.gen_range(-style.brightness_jitter..=style.brightness_jitter);

    let glyph_w = GLYPH_COLS * GLYPH_SCALE;
    let glyph_h = GLYPH_ROWS * GLYPH_SCALE;
    let text_w = 7 * glyph_w + 6 * CHAR_GAP;
    let x0 = (HR_WIDTH - text_w) / 2;
    let y0 = (HR_HEIGHT - glyph_h) / 2;

    let mut canvas = ImageTensor::filled(HR_HEIGHT, HR_WIDTH, 0.0);
    for y in 0..HR_HEIGHT {
        for x in 0..HR_WIDTH {
            canvas.set_pixel(y, x, bg);
        }
    }

    for (slot, &class) in classes.iter().enumerate() {
        let jx = rng.gen_range(-style.char_jitter_px..=style.char_jitter_px);
        let jy = rng.gen_range(-style.char_jitter_px..=style.char_jitter_px);
        let cx0 = x0 as i64 + (slot * (glyph_w + CHAR_GAP)) as i64 + jx as i64;
        let cy0 = y0 as i64 + jy as i64;
        for gy in 0..GLYPH_ROWS {
            for gx in 0..GLYPH_COLS {
                if !glyph_pixel(class, gy, gx) {
                    continue;
                }
                for sy in 0..GLYPH_SCALE {
                    for sx in 0..GLYPH_SCALE {
                        let py = cy0 + (gy * GLYPH_SCALE + sy) as i64;
                        let px = cx0 + (gx * GLYPH_SCALE + sx) as i64;
                        if (0..HR_HEIGHT as i64).contains(&py)
                            && (0..HR_WIDTH as i64).contains(&px)
                        {
                            canvas.set_pixel(py as usize, px as usize, fg);
                        }
                    }
                }
            }
        }
    }

    let theta = rng.gen_range(-style.affine_jitter..=style.affine_jitter);
    let shear = rng.gen_range(-style.affine_jitter..=style.affine_jitter);
    let warped = affine_warp(&canvas, theta, shear, bg);

    let mut out = warped;
    for y in 0..out.height {
        for x in 0..out.width {
            let p = out.pixel(y, x).map(|v| v * brightness);
            out.set_pixel(y, x, p);
        }
    }
    out.clamp01();
    Ok(out)
}

/// Inverse-mapped affine warp (rotation + horizontal shear) about the image
/// center, with bilinear sampling and `fill` outside the source.
fn affine_warp(src: &ImageTensor, theta: f32, shear: f32, fill: [f32; 3]) -> ImageTensor {
    let cy = src.height as f32 / 2.0;
    let cx = src.width as f32 / 2.0;
    let (sin, cos) = theta.sin_cos();
    ImageTensor::from_fn(src.height, src.width, |y, x| {
        let dy = y as f32 - cy;
        let dx = x as f32 - cx;
        // Inverse of rotation followed by shear.
        let ux = dx - shear * dy;
        let sx = cos * ux + sin * dy + cx;
        let sy = -sin * ux + cos * dy + cy;
        bilinear(src, sy, sx, fill)
    })
}

fn bilinear(src: &ImageTensor, y: f32, x: f32, fill: [f32; 3]) -> [f32; 3] {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let sample = |yy: f32, xx: f32| -> [f32; 3] {
        if yy < 0.0 || xx < 0.0 || yy >= src.height as f32 || xx >= src.width as f32 {
            fill
        } else {
            src.pixel(yy as usize, xx as usize)
        }
    };
    let p00 = sample(y0, x0);
    let p01 = sample(y0, x0 + 1.0);
    let p10 = sample(y0 + 1.0, x0);
    let p11 = sample(y0 + 1.0, x0 + 1.0);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p01[c] * fx;
        let bottom = p10[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
    out
}
