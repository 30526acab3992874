//! Super-resolution generator: shallow feature extraction, residual
//! concatenation blocks with an attention module after each one, a global
//! residual connection, and a PixelShuffle x2 head on top of a nearest
//! neighbour skip from the input.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, HR_HEIGHT, HR_WIDTH, LR_HEIGHT, LR_WIDTH};
use crate::models::attention::{AttentionModule, ConvKind};
use crate::models::layers::{pixel_shuffle, Conv2d};
use crate::models::params::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub num_rcb: usize,
    pub units_per_rcb: usize,
    pub attention_shared: bool,
    pub conv_kind: ConvKind,
    pub upscale: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_channels: 64,
            num_rcb: 4,
            units_per_rcb: 3,
            attention_shared: true,
            conv_kind: ConvKind::Deformable,
            upscale: 2,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.upscale != 2 {
            return Err(Error::Config(format!(
                "upscale factor {} unsupported, only 2 is implemented",
                self.upscale
            )));
        }
        if self.base_channels == 0 || self.base_channels % 4 != 0 {
            return Err(Error::Config(format!(
                "base_channels must be a positive multiple of 4, got {}",
                self.base_channels
            )));
        }
        if self.num_rcb == 0 || self.units_per_rcb == 0 {
            return Err(Error::Config(
                "num_rcb and units_per_rcb must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

struct ResidualBlock {
    units: Vec<Conv2d>,
    fuse: Conv2d,
}

impl ResidualBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut outs = Vec::with_capacity(self.units.len());
        let mut cur = x.clone();
        for unit in &self.units {
            cur = unit.forward(&cur)?.relu()?;
            outs.push(cur.clone());
        }
        let cat = Tensor::cat(&outs, 1)?;
        Ok((self.fuse.forward(&cat)? + x)?)
    }
}

pub struct Generator {
    config: GeneratorConfig,
    sfe: Conv2d,
    blocks: Vec<ResidualBlock>,
    /// One entry when attention is shared, `num_rcb` entries otherwise.
    attention: Vec<AttentionModule>,
    trunk_conv: Conv2d,
    head_conv: Conv2d,
}

impl Generator {
    pub fn new(store: &mut ParamStore, config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let c = config.base_channels;
        let sfe = Conv2d::new(store, "gen.sfe", 3, c, 3, 1, 1, 1)?;
        let mut blocks = Vec::with_capacity(config.num_rcb);
        for b in 0..config.num_rcb {
            let mut units = Vec::with_capacity(config.units_per_rcb);
            for u in 0..config.units_per_rcb {
                units.push(Conv2d::new(
                    store,
                    &format!("gen.rcb{b}.unit{u}"),
                    c,
                    c,
                    3,
                    1,
                    1,
                    1,
                )?);
            }
            let fuse = Conv2d::new(
                store,
                &format!("gen.rcb{b}.fuse"),
                c * config.units_per_rcb,
                c,
                1,
                0,
                1,
                1,
            )?;
            blocks.push(ResidualBlock { units, fuse });
        }
        let att_count = if config.attention_shared { 1 } else { config.num_rcb };
        let mut attention = Vec::with_capacity(att_count);
        for a in 0..att_count {
            attention.push(AttentionModule::new(
                store,
                &format!("gen.att{a}"),
                c,
                config.conv_kind,
            )?);
        }
        let trunk_conv = Conv2d::new(store, "gen.trunk", c, c, 3, 1, 1, 1)?;
        // PixelShuffle x2 turns C channels into C/4 at double resolution.
        let head_conv = Conv2d::new(store, "gen.head", c / 4, 3, 3, 1, 1, 1)?;
        Ok(Generator {
            config: config.clone(),
            sfe,
            blocks,
            attention,
            trunk_conv,
            head_conv,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn attention_for_block(&self, block: usize) -> &AttentionModule {
        if self.config.attention_shared {
            &self.attention[0]
        } else {
            &self.attention[block]
        }
    }

    /// (B, 3, 16, 48) in [0,1] -> (B, 3, 32, 96) clamped to [0,1].
    pub fn forward(&self, lr: &Tensor) -> Result<Tensor> {
        let (_b, c, h, w) = lr.dims4()?;
        if c != 3 || h != LR_HEIGHT || w != LR_WIDTH {
            return Err(Error::ShapeMismatch {
                expected: format!("(B, 3, {LR_HEIGHT}, {LR_WIDTH})"),
                got: format!("(B, {c}, {h}, {w})"),
            });
        }
        let shallow = self.sfe.forward(lr)?;
        let mut feat = shallow.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            feat = block.forward(&feat)?;
            feat = self.attention_for_block(i).forward(&feat)?;
        }
        let trunk = (self.trunk_conv.forward(&feat)? + shallow)?;
        let up = pixel_shuffle(&trunk, 2)?;
        let out = self.head_conv.forward(&up)?;
        let skip = lr.upsample_nearest2d(HR_HEIGHT, HR_WIDTH)?;
        Ok((out + skip)?.clamp(0.0, 1.0)?)
    }

    /// Single-image convenience wrapper around `forward`.
    pub fn super_resolve(&self, lr: &ImageTensor) -> Result<ImageTensor> {
        lr.expect_shape(LR_HEIGHT, LR_WIDTH)?;
        let device = self.sfe.weight().device().clone();
        let x = lr
            .to_chw_tensor(&device, self.sfe.weight().dtype())?
            .unsqueeze(0)?;
        let y = self.forward(&x)?.squeeze(0)?;
        ImageTensor::from_chw_tensor(&y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn small_config(kind: ConvKind, shared: bool) -> GeneratorConfig {
        GeneratorConfig {
            base_channels: 16,
            num_rcb: 2,
            units_per_rcb: 2,
            attention_shared: shared,
            conv_kind: kind,
            upscale: 2,
        }
    }

    #[test]
    fn forward_shape_and_range() {
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 11);
        let gen = Generator::new(&mut st, &small_config(ConvKind::Deformable, true)).unwrap();
        let x = Tensor::rand(0f32, 1f32, (2, 3, 16, 48), &Device::Cpu).unwrap();
        let y = gen.forward(&x).unwrap();
        assert_eq!(y.dims4().unwrap(), (2, 3, 32, 96));
        let max = y.max_all().unwrap().to_scalar::<f32>().unwrap();
        let min = y.min_all().unwrap().to_scalar::<f32>().unwrap();
        assert!((0.0..=1.0).contains(&min) && (0.0..=1.0).contains(&max));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 11);
        let gen = Generator::new(&mut st, &small_config(ConvKind::Depthwise, true)).unwrap();
        let x = Tensor::rand(0f32, 1f32, (1, 3, 16, 48), &Device::Cpu).unwrap();
        let a = gen.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let b = gen.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let mut st = ParamStore::new(&Device::Cpu, DType::F32, 11);
        let gen = Generator::new(&mut st, &small_config(ConvKind::Depthwise, true)).unwrap();
        let x = Tensor::zeros((1, 3, 32, 96), DType::F32, &Device::Cpu).unwrap();
        assert!(gen.forward(&x).is_err());
    }

    #[test]
    fn shared_attention_has_fewer_parameters() {
        let mut shared = ParamStore::new(&Device::Cpu, DType::F32, 11);
        Generator::new(&mut shared, &small_config(ConvKind::Deformable, true)).unwrap();
        let mut unshared = ParamStore::new(&Device::Cpu, DType::F32, 11);
        Generator::new(&mut unshared, &small_config(ConvKind::Deformable, false)).unwrap();
        assert!(shared.count_parameters() < unshared.count_parameters());
    }

    #[test]
    fn config_validation() {
        assert!(GeneratorConfig { upscale: 3, ..Default::default() }.validate().is_err());
        assert!(GeneratorConfig { base_channels: 30, ..Default::default() }.validate().is_err());
        assert!(GeneratorConfig::default().validate().is_ok());
    }
}
