//! Basic building blocks: plain/depthwise convolutions, linear layers, and
//! the PixelShuffle rearrangements.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::models::params::{Init, ParamStore};

#[derive(Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    pub padding: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
        dilation: usize,
    ) -> Result<Self> {
        Self::grouped(
            store,
            name,
            in_channels,
            out_channels,
            kernel,
            padding,
            stride,
            dilation,
            1,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn grouped(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
        dilation: usize,
        groups: usize,
    ) -> Result<Self> {
        let fan_in = in_channels / groups * kernel * kernel;
        let weight = store
            .var(
                &format!("{name}.weight"),
                &[out_channels, in_channels / groups, kernel, kernel],
                Init::KaimingNormal { fan_in },
            )?
            .as_tensor()
            .clone();
        let bias = store
            .var(&format!("{name}.bias"), &[out_channels], Init::Zeros)?
            .as_tensor()
            .clone();
        Ok(Conv2d {
            weight,
            bias,
            padding,
            stride,
            dilation,
            groups,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out = x.conv2d(
            &self.weight,
            self.padding,
            self.stride,
            self.dilation,
            self.groups,
        )?;
        let c = self.bias.dims1()?;
        Ok(out.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }
}

/// Depthwise-separable convolution: per-channel spatial kernel followed by a
/// pointwise mix.
#[derive(Clone)]
pub struct DepthwiseConv2d {
    depthwise: Conv2d,
    pointwise: Conv2d,
}

impl DepthwiseConv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    ) -> Result<Self> {
        let depthwise = Conv2d::grouped(
            store,
            &format!("{name}.dw"),
            in_channels,
            in_channels,
            kernel,
            padding,
            1,
            1,
            in_channels,
        )?;
        let pointwise = Conv2d::new(
            store,
            &format!("{name}.pw"),
            in_channels,
            out_channels,
            1,
            0,
            1,
            1,
        )?;
        Ok(DepthwiseConv2d {
            depthwise,
            pointwise,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.pointwise.forward(&self.depthwise.forward(x)?)
    }
}

#[derive(Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        weight_std: Option<f64>,
    ) -> Result<Self> {
        let init = match weight_std {
            Some(std) => Init::Normal { std },
            None => Init::KaimingNormal { fan_in: in_features },
        };
        let weight = store
            .var(&format!("{name}.weight"), &[out_features, in_features], init)?
            .as_tensor()
            .clone();
        let bias = store
            .var(&format!("{name}.bias"), &[out_features], Init::Zeros)?
            .as_tensor()
            .clone();
        Ok(Linear { weight, bias })
    }

    /// x: (..., in_features) -> (..., out_features)
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out = x.broadcast_matmul(&self.weight.t()?)?;
        Ok(out.broadcast_add(&self.bias)?)
    }
}

/// Rearrange (B, C·r², H, W) into (B, C, rH, rW) with no arithmetic.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (b, c_in, h, w) = x.dims4()?;
    if c_in % (r * r) != 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("channels divisible by {}", r * r),
            got: format!("{c_in} channels"),
        });
    }
    let c = c_in / (r * r);
    let out = x
        .reshape((b, c, r, r, h, w))?
        .permute((0, 1, 4, 2, 5, 3))?
        .reshape((b, c, h * r, w * r))?;
    Ok(out)
}

/// Inverse of [`pixel_shuffle`]: (B, C, rH, rW) into (B, C·r², H, W).
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (b, c, hr, wr) = x.dims4()?;
    if hr % r != 0 || wr % r != 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("spatial dims divisible by {r}"),
            got: format!("{hr}x{wr}"),
        });
    }
    let (h, w) = (hr / r, wr / r);
    let out = x
        .reshape((b, c, h, r, w, r))?
        .permute((0, 1, 3, 5, 2, 4))?
        .reshape((b, c * r * r, h, w))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn pixel_shuffle_shapes() {
        let x = Tensor::zeros((2, 256, 16, 48), DType::F32, &Device::Cpu).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.dims(), [2, 64, 32, 96]);
    }

    #[test]
    fn pixel_shuffle_round_trip_is_exact() {
        let x = Tensor::arange(0f32, (1 * 8 * 4 * 6) as f32, &Device::Cpu)
            .unwrap()
            .reshape((1, 8, 4, 6))
            .unwrap();
        let y = pixel_unshuffle(&pixel_shuffle(&x, 2).unwrap(), 2).unwrap();
        assert_eq!(
            x.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            y.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        );
    }

    #[test]
    fn pixel_shuffle_index_mapping() {
        // A single non-zero entry at (c_in, y, x) with c_in = c·r² + ry·r + rx
        // must land at output (c, y·r + ry, x·r + rx).
        let mut data = vec![0f32; 8 * 3 * 4];
        let (c, ry, rx, y, x) = (1usize, 1usize, 0usize, 2usize, 3usize);
        let c_in = c * 4 + ry * 2 + rx;
        data[c_in * 12 + y * 4 + x] = 1.0;
        let t = Tensor::from_vec(data, (1, 8, 3, 4), &Device::Cpu).unwrap();
        let out = pixel_shuffle(&t, 2).unwrap();
        let v = out.to_vec1_helper();
        let (oy, ox) = (y * 2 + ry, x * 2 + rx);
        let idx = c * 6 * 8 + oy * 8 + ox;
        assert_eq!(v[idx], 1.0);
        assert_eq!(v.iter().filter(|&&e| e != 0.0).count(), 1);
    }

    trait VecHelper {
        fn to_vec1_helper(&self) -> Vec<f32>;
    }
    impl VecHelper for Tensor {
        fn to_vec1_helper(&self) -> Vec<f32> {
            self.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        }
    }

    #[test]
    fn indivisible_channels_rejected() {
        let x = Tensor::zeros((1, 6, 4, 4), DType::F32, &Device::Cpu).unwrap();
        assert!(pixel_shuffle(&x, 2).is_err());
    }
}
