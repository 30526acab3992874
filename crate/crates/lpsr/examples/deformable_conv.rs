//! Show the two defining behaviors of the deformable convolution: with zero
//! offsets it reproduces a standard 3x3 convolution exactly, and a constant
//! integer offset rigidly shifts the sampling grid.
//!
//!     cargo run --example deformable_conv

use candle_core::{DType, Device, Tensor};
use lpsr::models::{DeformConv2d, ParamStore};

fn main() -> lpsr::Result<()> {
    let device = Device::Cpu;
    let mut store = ParamStore::new(&device, DType::F32, 1);
    let layer = DeformConv2d::new(&mut store, "demo", 4, 4)?;

    let x = Tensor::rand(0f32, 1f32, (1, 4, 10, 14), &device)?;

    // A freshly built layer has a zero-initialized offset head, so its
    // learned forward pass starts out identical to a plain convolution.
    let learned = layer.forward(&x)?;
    let standard = layer.forward_zero_offsets(&x)?;
    let gap = (learned - &standard)?
        .abs()?
        .max_all()?
        .to_scalar::<f32>()?;
    println!("zero-offset gap vs standard conv: {gap:.2e}");

    // A constant dy=+1 offset samples one row lower; on interior pixels that
    // equals convolving an up-shifted copy of the input.
    let (_, _, h, w) = x.dims4()?;
    let mut offsets = vec![0f32; 18 * h * w];
    for j in 0..9 {
        let base = 2 * j * h * w; // even channels hold dy
        for i in 0..h * w {
            offsets[base + i] = 1.0;
        }
    }
    let offsets = Tensor::from_vec(offsets, (1, 18, h, w), &device)?;
    let shifted_sampling = layer.forward_with_offsets(&x, &offsets)?;

    let zeros = Tensor::zeros((1, 4, 1, w), DType::F32, &device)?;
    let shifted_input = Tensor::cat(&[&x.narrow(2, 1, h - 1)?, &zeros], 2)?;
    let reference = layer.forward_zero_offsets(&shifted_input)?;

    let interior_gap = (shifted_sampling.narrow(2, 2, h - 4)?.narrow(3, 2, w - 4)?
        - reference.narrow(2, 2, h - 4)?.narrow(3, 2, w - 4)?)?
    .abs()?
    .max_all()?
    .to_scalar::<f32>()?;
    println!("integer-shift interior gap: {interior_gap:.2e}");
    Ok(())
}
