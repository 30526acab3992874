//! GAN-style training loop: a discriminator OCR learns to read ground-truth
//! plates while the generator is optimized against the composite loss
//! computed from the discriminator's predictions on its outputs. Per-epoch
//! validation drives the confusion-based penalty weight update and the
//! learning rate schedule.

pub mod adam;

use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::alphabet::{encode_label, Alphabet, PLATE_LEN};
use crate::data::{DatasetManifest, LpSample, Split};
use crate::error::{Error, Result};
use crate::image::batch_tensor;
use crate::loss::{
    classification_loss_t, decode_batch, lcofl_t, update_penalty_weights, ConfusionMatrix,
    ConfusionRule, LossValues, PenaltyWeights, SsimParams,
};
use crate::models::checkpoint::{self, CheckpointMeta};
use crate::models::{ConvKind, Generator, GeneratorConfig, OcrConfig, OcrNet, ParamStore};
use adam::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Deformable convolutions and shared attention (off: depthwise convs,
    /// per-block attention).
    pub arch_mod: bool,
    /// Discriminator keeps learning during the run (off: pretrained on HR,
    /// then frozen).
    pub gan_style: bool,
    /// Full composite loss with adaptive class weights (off: plain
    /// cross-entropy plus the structural term).
    pub lcofl: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            arch_mod: true,
            gan_style: true,
            lcofl: true,
        }
    }
}

impl AblationFlags {
    /// All 8 flag combinations, ordered with everything enabled last.
    pub fn all_combinations() -> Vec<AblationFlags> {
        let mut out = Vec::with_capacity(8);
        for bits in 0..8u8 {
            out.push(AblationFlags {
                arch_mod: bits & 4 != 0,
                gan_style: bits & 2 != 0,
                lcofl: bits & 1 != 0,
            });
        }
        out
    }

    pub fn label(&self) -> String {
        let onoff = |b: bool| if b { "on" } else { "off" };
        format!(
            "arch_mod={},gan_style={},lcofl={}",
            onoff(self.arch_mod),
            onoff(self.gan_style),
            onoff(self.lcofl)
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steplr_factor: f64,
    pub steplr_patience_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub w_max: f64,
    pub freeze_discriminator: bool,
    /// Passes over the training split before the first epoch: the
    /// discriminator trains on HR images so it can already read clean plates,
    /// and the generator trains on the structural term alone so adversarial
    /// training starts from a plausible reconstruction.
    pub warmup_epochs: usize,
    pub seed: u64,
    pub ablation: AblationFlags,
    pub generator: GeneratorConfig,
    pub ocr_channels: usize,
    pub ssim: SsimParams,
    pub confusion_rule: ConfusionRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 16,
            epochs: 20,
            steplr_factor: 0.9,
            steplr_patience_epochs: 5,
            alpha: 0.1,
            beta: 0.2,
            w_max: 5.0,
            freeze_discriminator: false,
            warmup_epochs: 3,
            seed: 0,
            ablation: AblationFlags::default(),
            generator: GeneratorConfig::default(),
            ocr_channels: 48,
            ssim: SsimParams::default(),
            confusion_rule: ConfusionRule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.steplr_factor > 0.0 && self.steplr_factor < 1.0) {
            return Err(Error::Config(format!(
                "steplr_factor must be in (0, 1), got {}",
                self.steplr_factor
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.effective_generator().validate()
    }

    /// Generator configuration after applying the architecture ablation.
    pub fn effective_generator(&self) -> GeneratorConfig {
        let mut g = self.generator.clone();
        if !self.ablation.arch_mod {
            g.conv_kind = ConvKind::Depthwise;
            g.attention_shared = false;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_c: f64,
    pub l_p: f64,
    pub l_s: f64,
    pub total: f64,
    pub val_rr: f64,
    pub lr: f64,
    pub weight_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub current_lr: f64,
    pub best_val_rr: f64,
    pub epochs_since_improvement: usize,
    pub penalty_weights: PenaltyWeights,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        TrainState {
            epoch: 0,
            current_lr: cfg.lr,
            best_val_rr: f64::NEG_INFINITY,
            epochs_since_improvement: 0,
            penalty_weights: PenaltyWeights::new(cfg.w_max),
            history: Vec::new(),
        }
    }
}

/// Reduce the learning rate once patience is exhausted; called once per epoch
/// after the improvement counter has been updated.
pub fn lr_schedule(state: &mut TrainState, cfg: &TrainConfig) {
    if state.epochs_since_improvement >= cfg.steplr_patience_epochs {
        state.current_lr *= cfg.steplr_factor;
        state.epochs_since_improvement = 0;
    }
}

/// A batch ready for the optimization step.
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
    /// (B, 7) ground-truth class indices.
    pub gt: Tensor,
}

pub struct StepOutcome {
    pub generator_loss: LossValues,
    pub discriminator_loss: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub gen_store: ParamStore,
    pub gen: Generator,
    pub disc_store: ParamStore,
    pub disc: OcrNet,
    gen_opt: Adam,
    disc_opt: Adam,
    pub state: TrainState,
    unit_weights: PenaltyWeights,
    device: Device,
    dtype: DType,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn shuffled_indices(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let stream = seed ^ fnv1a(format!("shuffle:{epoch}").as_bytes());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let device = Device::Cpu;
        let dtype = DType::F32;
        let gen_cfg = cfg.effective_generator();
        let mut gen_store = ParamStore::new(&device, dtype, cfg.seed ^ fnv1a(b"generator"));
        let gen = Generator::new(&mut gen_store, &gen_cfg)?;
        let mut disc_store = ParamStore::new(&device, dtype, cfg.seed ^ fnv1a(b"discriminator"));
        let disc_cfg = OcrConfig {
            channels: cfg.ocr_channels,
            ..OcrConfig::discriminator()
        };
        let disc = OcrNet::new(&mut disc_store, &disc_cfg)?;
        let gen_opt = Adam::new(gen_store.named_vars().to_vec())?;
        let disc_opt = Adam::new(disc_store.named_vars().to_vec())?;
        let state = TrainState::new(&cfg);
        let unit_weights = PenaltyWeights::new(cfg.w_max);
        Ok(Trainer {
            cfg,
            gen_store,
            gen,
            disc_store,
            disc,
            gen_opt,
            disc_opt,
            state,
            unit_weights,
            device,
            dtype,
        })
    }

    pub fn resume(cfg: TrainConfig, ckpt_dir: &Path) -> Result<Self> {
        let mut t = Trainer::new(cfg)?;
        let stored: GeneratorConfig = checkpoint::load_config(&ckpt_dir.join("generator"))?;
        if stored != t.cfg.effective_generator() {
            return Err(Error::CheckpointIncompatible(
                "generator config does not match the checkpoint".into(),
            ));
        }
        checkpoint::load_weights(&ckpt_dir.join("generator"), &mut t.gen_store)?;
        checkpoint::load_weights(&ckpt_dir.join("discriminator"), &mut t.disc_store)?;
        t.gen_opt.load(&ckpt_dir.join("opt_gen.safetensors"))?;
        t.disc_opt.load(&ckpt_dir.join("opt_disc.safetensors"))?;
        let state_path = ckpt_dir.join("state.json");
        let raw = fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
        t.state = serde_json::from_str(&raw)?;
        Ok(t)
    }

    fn make_batch(&self, samples: &[LpSample]) -> Result<Batch> {
        let lrs: Vec<&crate::image::ImageTensor> = samples.iter().map(|s| &s.lr).collect();
        let hrs: Vec<&crate::image::ImageTensor> = samples.iter().map(|s| &s.hr).collect();
        let lr = batch_tensor(&lrs, &self.device, self.dtype)?;
        let hr = batch_tensor(&hrs, &self.device, self.dtype)?;
        let alphabet = Alphabet;
        let mut gt = Vec::with_capacity(samples.len() * PLATE_LEN);
        for s in samples {
            let enc = encode_label(&s.label, &alphabet)?;
            gt.extend(enc.iter().map(|&i| i as u32));
        }
        let gt = Tensor::from_vec(gt, (samples.len(), PLATE_LEN), &self.device)?;
        Ok(Batch { lr, hr, gt })
    }

    fn load_batch(&self, manifest: &DatasetManifest, entries: &[&crate::data::ManifestEntry]) -> Result<Batch> {
        let samples = entries
            .iter()
            .map(|e| manifest.load_sample(e))
            .collect::<Result<Vec<_>>>()?;
        self.make_batch(&samples)
    }

    /// Unweighted cross-entropy of the discriminator on HR images.
    fn discriminator_loss(&self, batch: &Batch) -> Result<Tensor> {
        let probs = self.disc.forward(&batch.hr)?;
        let w = self.unit_weights.to_tensor(&self.device, self.dtype)?;
        classification_loss_t(&probs, &batch.gt, &w)
    }

    /// One optimization step: phase 1 updates the discriminator on HR images
    /// with ground-truth labels (unless frozen or disabled), phase 2 updates
    /// the generator through the discriminator's predictions on its output.
    /// The discriminator's parameters are never touched in phase 2.
    pub fn gan_step(&mut self, batch: &Batch, update_disc: bool) -> Result<StepOutcome> {
        let disc_loss = if update_disc && !self.cfg.freeze_discriminator {
            let loss = self.discriminator_loss(batch)?;
            let grads = loss.backward()?;
            self.disc_opt.step(self.state.current_lr, &grads)?;
            loss.to_dtype(DType::F64)?.to_scalar::<f64>()?
        } else {
            f64::NAN
        };

        let sr = self.gen.forward(&batch.lr)?;
        let probs = self.disc.forward(&sr)?;
        let values = if self.cfg.ablation.lcofl {
            let w = self.state.penalty_weights.to_tensor(&self.device, self.dtype)?;
            let breakdown = lcofl_t(
                &probs,
                &batch.gt,
                &sr,
                &batch.hr,
                &w,
                self.cfg.beta,
                &self.cfg.ssim,
            )?;
            let grads = breakdown.total.backward()?;
            let values = breakdown.values()?;
            self.gen_opt.step(self.state.current_lr, &grads)?;
            values
        } else {
            // Static-weight cross-entropy plus the structural term; no
            // layout penalty, no adaptive weights.
            let w = self.unit_weights.to_tensor(&self.device, self.dtype)?;
            let l_c = classification_loss_t(&probs, &batch.gt, &w)?;
            let l_s = crate::loss::dissimilarity_loss_t(&sr, &batch.hr, &self.cfg.ssim)?;
            let total = (&l_c + &l_s)?;
            let grads = total.backward()?;
            let values = LossValues {
                l_c: l_c.to_dtype(DType::F64)?.to_scalar::<f64>()?,
                l_p: 0.0,
                l_s: l_s.to_dtype(DType::F64)?.to_scalar::<f64>()?,
                total: total.to_dtype(DType::F64)?.to_scalar::<f64>()?,
            };
            self.gen_opt.step(self.state.current_lr, &grads)?;
            values
        };
        Ok(StepOutcome {
            generator_loss: values,
            discriminator_loss: disc_loss,
        })
    }

    /// Recognition rate (whole plates read correctly) and the per-position
    /// confusion matrix on a split, decoding with the discriminator.
    pub fn validate(&self, manifest: &DatasetManifest, split: Split) -> Result<(f64, ConfusionMatrix)> {
        let entries = manifest.split_entries(split);
        if entries.is_empty() {
            return Err(Error::Manifest(format!("no {split:?} entries in manifest")));
        }
        let alphabet = Alphabet;
        let mut cm = ConfusionMatrix::new();
        let mut correct = 0usize;
        for chunk in entries.chunks(self.cfg.batch_size) {
            let batch = self.load_batch(manifest, chunk)?;
            let sr = self.gen.forward(&batch.lr)?;
            let probs = self.disc.forward(&sr)?;
            let decoded = decode_batch(&probs, &alphabet)?;
            for (entry, pred) in chunk.iter().zip(&decoded) {
                if *pred == entry.text {
                    correct += 1;
                }
                for (gc, pc) in entry.text.chars().zip(pred.chars()) {
                    cm.record(alphabet.class_of(gc)?, alphabet.class_of(pc)?);
                }
            }
        }
        Ok((correct as f64 / entries.len() as f64, cm))
    }

    fn save_run_checkpoint(&self, dir: &Path) -> Result<()> {
        let digest = self.cfg.seed ^ fnv1a(format!("epoch:{}", self.state.epoch).as_bytes());
        let meta = CheckpointMeta {
            epoch: self.state.epoch,
            val_recognition_rate: self.state.history.last().map(|r| r.val_rr).unwrap_or(0.0),
            penalty_weights: self.state.penalty_weights.values().to_vec(),
            rng_state_digest: digest,
        };
        checkpoint::save_checkpoint(
            &dir.join("generator"),
            &self.gen_store,
            &self.cfg.effective_generator(),
            &meta,
        )?;
        checkpoint::save_checkpoint(
            &dir.join("discriminator"),
            &self.disc_store,
            self.disc.config(),
            &meta,
        )?;
        self.gen_opt.save(&dir.join("opt_gen.safetensors"))?;
        self.disc_opt.save(&dir.join("opt_disc.safetensors"))?;
        let state_path = dir.join("state.json");
        fs::write(&state_path, serde_json::to_string_pretty(&self.state)?)
            .map_err(|e| Error::io(&state_path, e))?;
        Ok(())
    }

    fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| {
            Error::Manifest(format!("cannot write history csv {}: {e}", path.display()))
        })?;
        w.write_record(["epoch", "l_c", "l_p", "l_s", "total", "val_rr", "lr"])
            .and_then(|_| {
                for r in &self.state.history {
                    w.write_record([
                        r.epoch.to_string(),
                        r.l_c.to_string(),
                        r.l_p.to_string(),
                        r.l_s.to_string(),
                        r.total.to_string(),
                        r.val_rr.to_string(),
                        r.lr.to_string(),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })
            .map_err(|e| Error::Manifest(format!("history csv: {e}")))
    }

    fn check_finite(&self, values: &LossValues, epoch: usize, step: usize) -> Result<()> {
        if ![values.l_c, values.l_p, values.l_s, values.total]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFiniteLoss {
                epoch,
                step,
                detail: format!("{values:?}"),
            });
        }
        Ok(())
    }

    /// Run the full training loop, writing `history.csv`, a `last` checkpoint
    /// every epoch, and a `best` checkpoint whenever validation improves.
    /// Resumable and deterministic in the seed.
    pub fn train(&mut self, manifest: &DatasetManifest, out_dir: &Path) -> Result<()> {
        if self.cfg.epochs <= self.state.epoch {
            return Ok(());
        }
        let train_entries = manifest.split_entries(Split::Train);
        if train_entries.is_empty() {
            return Err(Error::Manifest("no train entries in manifest".into()));
        }
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

        // Warm-up, once at the start of a fresh run: the discriminator takes
        // supervised steps on HR images so it can read clean plates, and the
        // generator takes structural-only steps so the adversarial phase
        // starts from a plausible reconstruction instead of noise. Without
        // the latter, the classification gradient through the discriminator
        // swamps the structural term and image quality never recovers.
        if self.state.epoch == 0 {
            for warm in 0..self.cfg.warmup_epochs {
                let order = shuffled_indices(
                    train_entries.len(),
                    self.cfg.seed,
                    u64::MAX - warm as u64,
                );
                for chunk in order.chunks(self.cfg.batch_size) {
                    let picked: Vec<_> = chunk.iter().map(|&i| train_entries[i]).collect();
                    let batch = self.load_batch(manifest, &picked)?;
                    if !self.cfg.freeze_discriminator {
                        let loss = self.discriminator_loss(&batch)?;
                        let grads = loss.backward()?;
                        self.disc_opt.step(self.cfg.lr, &grads)?;
                    }
                    let sr = self.gen.forward(&batch.lr)?;
                    let l_s = crate::loss::dissimilarity_loss_t(&sr, &batch.hr, &self.cfg.ssim)?;
                    let grads = l_s.backward()?;
                    self.gen_opt.step(self.cfg.lr, &grads)?;
                }
            }
        }

        while self.state.epoch < self.cfg.epochs {
            let epoch = self.state.epoch;
            let update_disc = self.cfg.ablation.gan_style;
            let order = shuffled_indices(train_entries.len(), self.cfg.seed, epoch as u64);
            let mut sums = LossValues { l_c: 0.0, l_p: 0.0, l_s: 0.0, total: 0.0 };
            let mut steps = 0usize;
            for chunk in order.chunks(self.cfg.batch_size) {
                let picked: Vec<_> = chunk.iter().map(|&i| train_entries[i]).collect();
                let batch = self.load_batch(manifest, &picked)?;
                let out = self.gan_step(&batch, update_disc)?;
                self.check_finite(&out.generator_loss, epoch, steps)?;
                sums.l_c += out.generator_loss.l_c;
                sums.l_p += out.generator_loss.l_p;
                sums.l_s += out.generator_loss.l_s;
                // Recorded total is the exact sum of the recorded components
                // (the graph's own total differs by float rounding).
                sums.total +=
                    out.generator_loss.l_c + out.generator_loss.l_p + out.generator_loss.l_s;
                steps += 1;
            }
            let n = steps as f64;

            let (val_rr, cm) = self.validate(manifest, Split::Val)?;
            if self.cfg.ablation.lcofl {
                self.state.penalty_weights = update_penalty_weights(
                    &self.state.penalty_weights,
                    &cm,
                    self.cfg.alpha,
                    &self.cfg.confusion_rule,
                );
            }

            let improved = val_rr > self.state.best_val_rr;
            if improved {
                self.state.best_val_rr = val_rr;
                self.state.epochs_since_improvement = 0;
            } else {
                self.state.epochs_since_improvement += 1;
            }
            let record = EpochRecord {
                epoch,
                l_c: sums.l_c / n,
                l_p: sums.l_p / n,
                l_s: sums.l_s / n,
                total: sums.total / n,
                val_rr,
                lr: self.state.current_lr,
                weight_digest: self.state.penalty_weights.digest(),
            };
            self.state.history.push(record);
            lr_schedule(&mut self.state, &self.cfg);
            self.state.epoch += 1;

            self.write_history_csv(&out_dir.join("history.csv"))?;
            self.save_run_checkpoint(&out_dir.join("last"))?;
            if improved {
                self.save_run_checkpoint(&out_dir.join("best"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
