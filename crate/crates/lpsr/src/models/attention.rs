//! Three-unit attention block: a channel gate, a spatial gate, and a dilated
//! refinement branch. One parameter set can be shared across every residual
//! block of the generator instead of giving each block its own copy.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::deform::DeformConv2d;
use crate::models::layers::{pixel_unshuffle, Conv2d, DepthwiseConv2d, Linear};
use crate::models::params::ParamStore;

/// Which convolution the Channel and Positional units use. Deformable is the
/// default; depthwise is the cheaper baseline used by the architecture
/// ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    Deformable,
    Depthwise,
}

#[derive(Clone)]
enum SampledConv {
    Deformable(DeformConv2d),
    Depthwise(DepthwiseConv2d),
}

impl SampledConv {
    fn new(
        store: &mut ParamStore,
        name: &str,
        kind: ConvKind,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        Ok(match kind {
            ConvKind::Deformable => {
                SampledConv::Deformable(DeformConv2d::new(store, name, in_channels, out_channels)?)
            }
            ConvKind::Depthwise => {
                SampledConv::Depthwise(DepthwiseConv2d::new(store, name, in_channels, out_channels, 3, 1)?)
            }
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            SampledConv::Deformable(c) => c.forward(x),
            SampledConv::Depthwise(c) => c.forward(x),
        }
    }
}

#[derive(Clone)]
pub struct AttentionModule {
    // Channel unit: sub-sample to half resolution, look at inter-channel
    // structure, gate channels globally.
    ch_reduce: Conv2d,
    ch_conv: SampledConv,
    ch_fc: Linear,
    // Positional unit: per-pixel gate.
    pos_conv: SampledConv,
    pos_project: Conv2d,
    // Geometrical perception unit: dilated convs, additive refinement.
    geo_a: Conv2d,
    geo_b: Conv2d,
    channels: usize,
}

impl AttentionModule {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        kind: ConvKind,
    ) -> Result<Self> {
        assert!(channels % 4 == 0, "attention channels must be divisible by 4");
        let c4 = channels / 4;
        let ch_reduce = Conv2d::new(store, &format!("{name}.ch_reduce"), channels * 4, c4, 1, 0, 1, 1)?;
        let ch_conv = SampledConv::new(store, &format!("{name}.ch_conv"), kind, c4, c4)?;
        let ch_fc = Linear::new(store, &format!("{name}.ch_fc"), c4, channels, None)?;
        let pos_conv = SampledConv::new(store, &format!("{name}.pos_conv"), kind, channels, 8)?;
        let pos_project = Conv2d::new(store, &format!("{name}.pos_project"), 8, 1, 1, 0, 1, 1)?;
        let geo_a = Conv2d::new(store, &format!("{name}.geo_a"), channels, c4, 3, 2, 1, 2)?;
        let geo_b = Conv2d::new(store, &format!("{name}.geo_b"), c4, channels, 3, 1, 1, 1)?;
        Ok(AttentionModule {
            ch_reduce,
            ch_conv,
            ch_fc,
            pos_conv,
            pos_project,
            geo_a,
            geo_b,
            channels,
        })
    }

    /// (B, C, H, W) -> (B, C, H, W); H and W must be even (the channel unit
    /// works at half resolution).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, _h, _w) = x.dims4()?;
        if c != self.channels {
            return Err(crate::Error::ShapeMismatch {
                expected: format!("{} channels", self.channels),
                got: format!("{c} channels"),
            });
        }

        // Channel gate.
        let down = pixel_unshuffle(x, 2)?;
        let ch = self.ch_reduce.forward(&down)?.relu()?;
        let ch = self.ch_conv.forward(&ch)?.relu()?;
        let pooled = ch.mean(3)?.mean(2)?; // (B, C/4)
        let gate = candle_nn::ops::sigmoid(&self.ch_fc.forward(&pooled)?)?;
        let gate = gate.reshape((b, self.channels, 1, 1))?;

        // Spatial gate.
        let pos = self.pos_conv.forward(x)?.relu()?;
        let sgate = candle_nn::ops::sigmoid(&self.pos_project.forward(&pos)?)?; // (B,1,H,W)

        let gated = x.broadcast_mul(&gate)?.broadcast_mul(&sgate)?;

        // Additive refinement.
        let geo = self.geo_b.forward(&self.geo_a.forward(&gated)?.relu()?)?;
        Ok((gated + geo)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn forward_shape(kind: ConvKind) {
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 3);
        let att = AttentionModule::new(&mut st, "att", 16, kind).unwrap();
        let x = Tensor::randn(0f32, 1f32, (2, 16, 8, 12), &Device::Cpu).unwrap();
        let y = att.forward(&x).unwrap();
        assert_eq!(y.dims4().unwrap(), (2, 16, 8, 12));
    }

    #[test]
    fn preserves_shape_deformable() {
        forward_shape(ConvKind::Deformable);
    }

    #[test]
    fn preserves_shape_depthwise() {
        forward_shape(ConvKind::Depthwise);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 3);
        let att = AttentionModule::new(&mut st, "att", 16, ConvKind::Depthwise).unwrap();
        let x = Tensor::zeros((1, 8, 8, 12), DType::F32, &Device::Cpu).unwrap();
        assert!(att.forward(&x).is_err());
    }
}
