//! Deformable convolution: the sampling grid of a k×k kernel is displaced by
//! learned per-location offsets, with bilinear interpolation. Built from
//! gather plus interpolation weights, so gradients reach the input, the
//! kernel, and the offsets.

use candle_core::{DType, Tensor};

use crate::error::Result;
use crate::models::layers::Conv2d;
use crate::models::params::ParamStore;

/// Margin of zero padding added around the input before sampling. Sampling
/// coordinates are clamped into the padded area, so displacements that land
/// outside the image read zeros, matching zero-padded convolution semantics.
const SAMPLE_MARGIN: usize = 4;

#[derive(Clone)]
pub struct DeformConv2d {
    /// Predicts 2·k² offset channels (dy, dx per kernel position) from the
    /// same features the deformable kernel reads.
    offset_conv: Conv2d,
    weight: Tensor,
    bias: Tensor,
    kernel: usize,
    padding: usize,
}

impl DeformConv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        let kernel = 3usize;
        let padding = 1usize;
        // Offsets start at zero so the layer begins as a standard conv.
        let offset_conv = Conv2d::new(
            store,
            &format!("{name}.offset"),
            in_channels,
            2 * kernel * kernel,
            kernel,
            padding,
            1,
            1,
        )?;
        zero_offset_init(store, name)?;
        let fan_in = in_channels * kernel * kernel;
        let weight = store
            .var(
                &format!("{name}.weight"),
                &[out_channels, in_channels, kernel, kernel],
                crate::models::params::Init::KaimingNormal { fan_in },
            )?
            .as_tensor()
            .clone();
        let bias = store
            .var(&format!("{name}.bias"), &[out_channels], crate::models::params::Init::Zeros)?
            .as_tensor()
            .clone();
        Ok(DeformConv2d {
            offset_conv,
            weight,
            bias,
            kernel,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let offsets = self.offset_conv.forward(x)?;
        self.forward_with_offsets(x, &offsets)
    }

    /// Forward with explicitly supplied offsets of shape (B, 2k², H, W);
    /// channel 2j is dy and 2j+1 is dx for kernel position j in row-major
    /// kernel order.
    pub fn forward_with_offsets(&self, x: &Tensor, offsets: &Tensor) -> Result<Tensor> {
        let sampled = deform_sample(x, offsets, self.kernel, self.padding)?;
        let (out_c, in_c, kh, kw) = self.weight.dims4()?;
        let w_flat = self.weight.reshape((out_c, in_c * kh * kw, 1, 1))?;
        let out = sampled.conv2d(&w_flat, 0, 1, 1, 1)?;
        Ok(out.broadcast_add(&self.bias.reshape((1, out_c, 1, 1))?)?)
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    /// Reference output with all offsets forced to zero: a plain zero-padded
    /// convolution with the same kernel and bias.
    pub fn forward_zero_offsets(&self, x: &Tensor) -> Result<Tensor> {
        let out = x.conv2d(&self.weight, self.padding, 1, 1, 1)?;
        let (out_c, ..) = self.weight.dims4()?;
        Ok(out.broadcast_add(&self.bias.reshape((1, out_c, 1, 1))?)?)
    }
}

fn zero_offset_init(store: &mut ParamStore, name: &str) -> Result<()> {
    let w = store.get(&format!("{name}.offset.weight")).expect("just created");
    w.set(&w.as_tensor().zeros_like()?)?;
    Ok(())
}

/// Bilinearly sample `x` (B, C, H, W) at every kernel tap displaced by
/// `offsets` (B, 2k², H, W), returning (B, C·k², H, W) ordered so that a
/// reshaped (C_out, C·k², 1, 1) kernel reproduces convolution semantics.
pub fn deform_sample(x: &Tensor, offsets: &Tensor, kernel: usize, padding: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let dtype = x.dtype();
    let device = x.device();
    let m = SAMPLE_MARGIN as i64;

    // Zero-pad so clamped out-of-range samples read zeros.
    let padded = x
        .pad_with_zeros(2, SAMPLE_MARGIN, SAMPLE_MARGIN)?
        .pad_with_zeros(3, SAMPLE_MARGIN, SAMPLE_MARGIN)?;
    let (hp, wp) = (h + 2 * SAMPLE_MARGIN, w + 2 * SAMPLE_MARGIN);
    let flat = padded.reshape((b, c, hp * wp))?;

    // Base output coordinate grids (in padded frame).
    let ys: Vec<f32> = (0..h).map(|v| v as f32).collect();
    let xs: Vec<f32> = (0..w).map(|v| v as f32).collect();
    let y_grid = Tensor::from_vec(ys, (1, 1, h, 1), device)?
        .broadcast_as((1, 1, h, w))?
        .to_dtype(dtype)?;
    let x_grid = Tensor::from_vec(xs, (1, 1, 1, w), device)?
        .broadcast_as((1, 1, h, w))?
        .to_dtype(dtype)?;

    let pad_off = padding as i64;
    let mut taps = Vec::with_capacity(kernel * kernel);
    for j in 0..kernel * kernel {
        let ky = (j / kernel) as i64;
        let kx = (j % kernel) as i64;
        let dy = offsets.narrow(1, 2 * j, 1)?;
        let dx = offsets.narrow(1, 2 * j + 1, 1)?;
        // Sample position in the padded frame.
        let py = dy
            .broadcast_add(&y_grid)?
            .affine(1.0, (ky - pad_off + m) as f64)?;
        let px = dx
            .broadcast_add(&x_grid)?
            .affine(1.0, (kx - pad_off + m) as f64)?;

        let py = py.clamp(0.0, (hp - 1) as f64 - 1e-3)?;
        let px = px.clamp(0.0, (wp - 1) as f64 - 1e-3)?;
        let y0 = py.floor()?.detach();
        let x0 = px.floor()?.detach();
        let fy = py.sub(&y0)?;
        let fx = px.sub(&x0)?;
        let one_minus_fy = fy.affine(-1.0, 1.0)?;
        let one_minus_fx = fx.affine(-1.0, 1.0)?;

        let gather_at = |yi: &Tensor, xi: &Tensor| -> Result<Tensor> {
            let idx = (yi.affine(wp as f64, 0.0)? + xi)?
                .to_dtype(DType::U32)?
                .reshape((b, 1, h * w))?
                .broadcast_as((b, c, h * w))?
                .contiguous()?;
            Ok(flat.gather(&idx, 2)?)
        };
        let y1 = y0.affine(1.0, 1.0)?;
        let x1 = x0.affine(1.0, 1.0)?;
        let g00 = gather_at(&y0, &x0)?;
        let g01 = gather_at(&y0, &x1)?;
        let g10 = gather_at(&y1, &x0)?;
        let g11 = gather_at(&y1, &x1)?;

        let wflat = |a: &Tensor, bb: &Tensor| -> Result<Tensor> {
            Ok((a * bb)?.reshape((b, 1, h * w))?)
        };
        let w00 = wflat(&one_minus_fy, &one_minus_fx)?;
        let w01 = wflat(&one_minus_fy, &fx)?;
        let w10 = wflat(&fy, &one_minus_fx)?;
        let w11 = wflat(&fy, &fx)?;

        let tap = (g00.broadcast_mul(&w00)?
            + g01.broadcast_mul(&w01)?)?
            .add(&(g10.broadcast_mul(&w10)? + g11.broadcast_mul(&w11)?)?)?;
        taps.push(tap.reshape((b, c, 1, h, w))?);
    }
    // (B, k², C, H, W) -> (B, C, k², H, W) -> (B, C·k², H, W) so channel
    // index c·k² + j matches a row-major flattened convolution kernel.
    let stacked = Tensor::cat(&taps, 2)?; // (B, C, k², H, W)
    Ok(stacked.reshape((b, c * kernel * kernel, h, w))?)
}
