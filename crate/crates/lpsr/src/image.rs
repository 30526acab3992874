//! RGB image tensors in `[0,1]`, PNG round-trips, bicubic resizing, and padding.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};

pub const HR_HEIGHT: usize = 32;
pub const HR_WIDTH: usize = 96;
pub const LR_HEIGHT: usize = 16;
pub const LR_WIDTH: usize = 48;

/// An H×W×3 RGB image with values in `[0,1]`, stored row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}x3 = {} values", height * width * 3),
                got: format!("{} values", data.len()),
            });
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        ImageTensor {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        ImageTensor {
            height,
            width,
            data,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn expect_shape(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}"),
                got: format!("{}x{}", self.height, self.width),
            });
        }
        Ok(())
    }

    /// Per-pixel RGB mean as a flat H×W luminance buffer.
    pub fn luminance(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|c| (c[0] + c[1] + c[2]) / 3.0)
            .collect()
    }

    /// Bicubic (Catmull-Rom) resize to the given size.
    pub fn resize_bicubic(&self, height: usize, width: usize) -> Self {
        let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer length checked at construction");
        let resized = image::imageops::resize(
            &buf,
            width as u32,
            height as u32,
            image::imageops::FilterType::CatmullRom,
        );
        let mut out = ImageTensor {
            height,
            width,
            data: resized.into_raw(),
        };
        out.clamp01();
        out
    }

    /// Pad with `fill` so the aspect ratio (width/height) reaches `target_aspect`;
    /// content stays centered and is never cropped.
    pub fn pad_to_aspect(&self, target_aspect: f64, fill: f32) -> Self {
        assert!(target_aspect > 0.0, "target aspect must be positive");
        let h = self.height as f64;
        let w = self.width as f64;
        let current = w / h;
        if (current - target_aspect).abs() * h < 1.0 {
            return self.clone();
        }
        let (new_h, new_w) = if current < target_aspect {
            (self.height, (h * target_aspect).round() as usize)
        } else {
            ((w / target_aspect).round() as usize, self.width)
        };
        let top = (new_h - self.height) / 2;
        let left = (new_w - self.width) / 2;
        let mut out = ImageTensor::filled(new_h, new_w, fill);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(top + y, left + x, self.pixel(y, x));
            }
        }
        out
    }

    /// Central crop of the given size.
    pub fn center_crop(&self, height: usize, width: usize) -> Self {
        assert!(height <= self.height && width <= self.width);
        let top = (self.height - height) / 2;
        let left = (self.width - width) / 2;
        ImageTensor::from_fn(height, width, |y, x| self.pixel(top + y, left + x))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(
            self.width as u32,
            self.height as u32,
            |x, y| {
                let p = self.pixel(y as usize, x as usize);
                Rgb(p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            },
        );
        buf.save(path.as_ref())?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
        ImageTensor::new(h as usize, w as usize, data)
    }

    /// To a (3, H, W) tensor.
    pub fn to_chw_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let t = Tensor::from_slice(&self.data, (self.height, self.width, 3), device)?
            .permute((2, 0, 1))?
            .contiguous()?
            .to_dtype(dtype)?;
        Ok(t)
    }

    /// From a (3, H, W) tensor, clamping into `[0,1]`.
    pub fn from_chw_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        if c != 3 {
            return Err(Error::ShapeMismatch {
                expected: "3 channels".into(),
                got: format!("{c} channels"),
            });
        }
        let data = t
            .to_dtype(DType::F32)?
            .permute((1, 2, 0))?
            .contiguous()?
            .flatten_all()?
            .to_vec1::<f32>()?;
        let mut img = ImageTensor::new(h, w, data)?;
        img.clamp01();
        Ok(img)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// Stack images into a (B, 3, H, W) batch tensor.
pub fn batch_tensor(images: &[&ImageTensor], device: &Device, dtype: DType) -> Result<Tensor> {
    let tensors = images
        .iter()
        .map(|img| img.to_chw_tensor(device, dtype))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::stack(&tensors, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_img(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, |y, x| {
            [
                x as f32 / w as f32,
                y as f32 / h as f32,
                ((x + y) % 7) as f32 / 7.0,
            ]
        })
    }

    #[test]
    fn pad_already_at_target_is_identity() {
        let img = gradient_img(30, 90);
        let padded = img.pad_to_aspect(3.0, 0.5);
        assert_eq!(padded, img);
    }

    #[test]
    fn pad_narrow_image_adds_side_bands() {
        let img = gradient_img(30, 60);
        let padded = img.pad_to_aspect(3.0, 0.5);
        assert_eq!((padded.height, padded.width), (30, 90));
        for y in 0..30 {
            for x in 0..15 {
                assert_eq!(padded.pixel(y, x), [0.5, 0.5, 0.5]);
                assert_eq!(padded.pixel(y, 75 + x), [0.5, 0.5, 0.5]);
            }
        }
        assert_eq!(padded.center_crop(30, 60), img);
    }

    #[test]
    fn pad_wide_axis_never_crops() {
        let img = gradient_img(40, 90);
        let padded = img.pad_to_aspect(3.0, 0.5);
        assert_eq!((padded.height, padded.width), (40, 120));
        assert_eq!(padded.center_crop(40, 90), img);
    }

    #[test]
    fn png_round_trip_is_exact_at_8bit() {
        let dir = std::env::temp_dir().join("lpsr_img_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("probe.png");
        let img = ImageTensor::from_fn(8, 12, |y, x| {
            [
                (y * 12 + x) as f32 / 255.0,
                ((y * 12 + x) * 2 % 256) as f32 / 255.0,
                0.25,
            ]
        });
        img.save_png(&path).unwrap();
        let back = ImageTensor::load_png(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn chw_tensor_round_trip() {
        let img = gradient_img(16, 48);
        let t = img
            .to_chw_tensor(&Device::Cpu, DType::F32)
            .unwrap();
        assert_eq!(t.dims(), [3, 16, 48]);
        let back = ImageTensor::from_chw_tensor(&t).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
