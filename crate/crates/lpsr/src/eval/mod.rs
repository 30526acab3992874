//! Test-time metrics and reports: recognition rates at the three character
//! thresholds, PSNR, SSIM, three-row evaluation tables (super-resolved,
//! bicubic baseline, ground-truth ceiling), the ablation table, and training
//! curve plots.

pub mod plots;
pub mod report;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, PLATE_LEN};
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::image::{batch_tensor, ImageTensor, HR_HEIGHT, HR_WIDTH};
use crate::loss::{classification_loss_t, decode_batch, ssim_images, PenaltyWeights, SsimParams};
use crate::models::{Generator, OcrConfig, OcrNet, ParamStore};
use crate::trainer::adam::Adam;

/// PSNR reported for bit-identical images (the true value is infinite).
pub const PSNR_CAP_DB: f64 = 100.0;

/// Number of positions where the two length-7 strings agree.
pub fn correct_chars(pred: &str, gt: &str) -> Result<usize> {
    if pred.chars().count() != PLATE_LEN || gt.chars().count() != PLATE_LEN {
        return Err(Error::ShapeMismatch {
            expected: format!("two strings of length {PLATE_LEN}"),
            got: format!("{:?} vs {:?}", pred.len(), gt.len()),
        });
    }
    Ok(pred.chars().zip(gt.chars()).filter(|(a, b)| a == b).count())
}

/// Fractions of plates with all 7, at least 6, and at least 5 characters
/// read correctly (positional matching).
pub fn recognition_rates(pairs: &[(String, String)]) -> Result<(f64, f64, f64)> {
    let n = pairs.len() as f64;
    let (mut all, mut ge6, mut ge5) = (0usize, 0usize, 0usize);
    for (pred, gt) in pairs {
        let c = correct_chars(pred, gt)?;
        if c == PLATE_LEN {
            all += 1;
        }
        if c >= 6 {
            ge6 += 1;
        }
        if c >= 5 {
            ge5 += 1;
        }
    }
    Ok((all as f64 / n, ge6 as f64 / n, ge5 as f64 / n))
}

/// 10·log10(1 / MSE) over all pixels and channels, capped at 100 dB for
/// identical images.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.height, a.width),
            got: format!("{}x{}", b.height, b.width),
        });
    }
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub id: String,
    pub gt: String,
    pub pred: String,
    pub correct_chars: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rr_all: f64,
    pub rr_ge6: f64,
    pub rr_ge5: f64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub n: usize,
    pub per_sample: Vec<SampleEval>,
}

impl MetricsReport {
    pub fn from_samples(per_sample: Vec<SampleEval>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::Manifest("cannot build a report from zero samples".into()));
        }
        let pairs: Vec<(String, String)> = per_sample
            .iter()
            .map(|s| (s.pred.clone(), s.gt.clone()))
            .collect();
        let (rr_all, rr_ge6, rr_ge5) = recognition_rates(&pairs)?;
        let n = per_sample.len();
        let mean_psnr = per_sample.iter().map(|s| s.psnr).sum::<f64>() / n as f64;
        let mean_ssim = per_sample.iter().map(|s| s.ssim).sum::<f64>() / n as f64;
        Ok(MetricsReport {
            rr_all,
            rr_ge6,
            rr_ge5,
            mean_psnr,
            mean_ssim,
            n,
            per_sample,
        })
    }

    /// Mean fraction of correctly read characters per plate.
    pub fn char_accuracy(&self) -> f64 {
        self.per_sample
            .iter()
            .map(|s| s.correct_chars as f64 / PLATE_LEN as f64)
            .sum::<f64>()
            / self.n as f64
    }
}

/// The three Table-style rows an evaluation emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub sr: MetricsReport,
    pub bicubic: MetricsReport,
    pub hr: MetricsReport,
}

impl EvalSuite {
    pub fn rows(&self) -> [(&'static str, &MetricsReport); 3] {
        [
            ("bicubic_lr", &self.bicubic),
            ("super_resolved", &self.sr),
            ("ground_truth_hr", &self.hr),
        ]
    }
}

fn ocr_batch(ocr: &OcrNet, images: &[&ImageTensor]) -> Result<Vec<String>> {
    let device = Device::Cpu;
    let x = batch_tensor(images, &device, DType::F32)?;
    let probs = ocr.forward(&x)?;
    decode_batch(&probs, &Alphabet)
}

/// Super-resolve every sample in the split, decode with the held-out
/// evaluation OCR, and report metrics for the SR output alongside the
/// bicubic-upscaled LR baseline and the HR ceiling.
pub fn evaluate(
    generator: &Generator,
    evaluator: &OcrNet,
    manifest: &DatasetManifest,
    split: Split,
    ssim_params: &SsimParams,
    batch_size: usize,
) -> Result<EvalSuite> {
    let entries = manifest.split_entries(split);
    if entries.is_empty() {
        return Err(Error::Manifest(format!("no {split:?} entries in manifest")));
    }
    let mut sr_rows = Vec::with_capacity(entries.len());
    let mut bi_rows = Vec::with_capacity(entries.len());
    let mut hr_rows = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(batch_size.max(1)) {
        let samples = chunk
            .iter()
            .map(|e| manifest.load_sample(e))
            .collect::<Result<Vec<_>>>()?;
        let sr_imgs = samples
            .iter()
            .map(|s| generator.super_resolve(&s.lr))
            .collect::<Result<Vec<_>>>()?;
        let bi_imgs: Vec<ImageTensor> = samples
            .iter()
            .map(|s| s.lr.resize_bicubic(HR_HEIGHT, HR_WIDTH))
            .collect();
        let sr_pred = ocr_batch(evaluator, &sr_imgs.iter().collect::<Vec<_>>())?;
        let bi_pred = ocr_batch(evaluator, &bi_imgs.iter().collect::<Vec<_>>())?;
        let hr_pred = ocr_batch(evaluator, &samples.iter().map(|s| &s.hr).collect::<Vec<_>>())?;
        for (i, s) in samples.iter().enumerate() {
            let gt = s.label.text.clone();
            sr_rows.push(SampleEval {
                id: s.id.clone(),
                gt: gt.clone(),
                pred: sr_pred[i].clone(),
                correct_chars: correct_chars(&sr_pred[i], &gt)?,
                psnr: psnr(&sr_imgs[i], &s.hr)?,
                ssim: ssim_images(&sr_imgs[i], &s.hr, ssim_params)?,
            });
            bi_rows.push(SampleEval {
                id: s.id.clone(),
                gt: gt.clone(),
                pred: bi_pred[i].clone(),
                correct_chars: correct_chars(&bi_pred[i], &gt)?,
                psnr: psnr(&bi_imgs[i], &s.hr)?,
                ssim: ssim_images(&bi_imgs[i], &s.hr, ssim_params)?,
            });
            hr_rows.push(SampleEval {
                id: s.id.clone(),
                gt: gt.clone(),
                pred: hr_pred[i].clone(),
                correct_chars: correct_chars(&hr_pred[i], &gt)?,
                psnr: PSNR_CAP_DB,
                ssim: 1.0,
            });
        }
    }
    Ok(EvalSuite {
        sr: MetricsReport::from_samples(sr_rows)?,
        bicubic: MetricsReport::from_samples(bi_rows)?,
        hr: MetricsReport::from_samples(hr_rows)?,
    })
}

/// Supervised training of the evaluation OCR. Every batch is rendered on the
/// fly from fresh uniformly random labels (both layouts, default style), so
/// the evaluator learns the renderer's character shapes rather than any
/// finite plate list. It never sees generator output during training, which
/// is what keeps test-time decoding unbiased.
pub fn train_evaluator(
    steps: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    channels: usize,
) -> Result<(ParamStore, OcrNet)> {
    use rand::{Rng, SeedableRng};

    use crate::alphabet::LayoutId;
    use crate::data::{random_label, render_plate, RenderStyle};

    let device = Device::Cpu;
    let mut store = ParamStore::new(&device, DType::F32, seed);
    let cfg = OcrConfig {
        channels,
        ..OcrConfig::evaluator()
    };
    let net = OcrNet::new(&mut store, &cfg)?;
    let mut opt = Adam::new(store.named_vars().to_vec())?;
    let unit_w = PenaltyWeights::new(1.0).to_tensor(&device, DType::F32)?;
    let style = RenderStyle::default();
    let alphabet = Alphabet;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..steps {
        let mut images = Vec::with_capacity(batch_size);
        let mut gt = Vec::with_capacity(batch_size * PLATE_LEN);
        for _ in 0..batch_size {
            let layout = if rng.gen_bool(0.5) {
                LayoutId::Brazilian
            } else {
                LayoutId::Mercosur
            };
            let label = random_label(layout, &mut rng);
            images.push(render_plate(&label, &style, rng.gen())?);
            let enc = crate::alphabet::encode_label(&label, &alphabet)?;
            gt.extend(enc.iter().map(|&i| i as u32));
        }
        let hr = batch_tensor(&images.iter().collect::<Vec<_>>(), &device, DType::F32)?;
        let gt = Tensor::from_vec(gt, (batch_size, PLATE_LEN), &device)?;
        let probs = net.forward(&hr)?;
        let loss = classification_loss_t(&probs, &gt, &unit_w)?;
        let grads = loss.backward()?;
        opt.step(lr, &grads)?;
    }
    Ok((store, net))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> String {
        s.to_string()
    }

    #[test]
    fn rates_counted_by_hand() {
        let pairs = vec![
            (p("ABC1234"), p("ABC1234")),
            (p("ABC1235"), p("ABC1234")),
            (p("ABX1299"), p("ABC1234")),
        ];
        let (all, ge6, ge5) = recognition_rates(&pairs).unwrap();
        assert!((all - 1.0 / 3.0).abs() < 1e-12);
        assert!((ge6 - 2.0 / 3.0).abs() < 1e-12);
        assert!((ge5 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_hit_every_threshold() {
        let pairs: Vec<_> = (0..5).map(|_| (p("XYZ9876"), p("XYZ9876"))).collect();
        assert_eq!(recognition_rates(&pairs).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(recognition_rates(&[(p("ABC123"), p("ABC1234"))]).is_err());
    }

    #[test]
    fn constructed_table_shaped_rate_set() {
        // 498 exact, 214 with one wrong character, 121 with two, 167 with
        // three: rates 0.498 / 0.712 / 0.833 over 1000 plates.
        let gt = "ABC1234";
        let mut pairs = Vec::with_capacity(1000);
        let wrong = |k: usize| -> String {
            // Flip the first k characters (letters to Z, digits to 9).
            gt.chars()
                .enumerate()
                .map(|(i, c)| {
                    if i < k {
                        if c.is_ascii_digit() { '9' } else { 'Z' }
                    } else {
                        c
                    }
                })
                .collect()
        };
        for _ in 0..498 {
            pairs.push((p(gt), p(gt)));
        }
        for _ in 0..214 {
            pairs.push((wrong(1), p(gt)));
        }
        for _ in 0..121 {
            pairs.push((wrong(2), p(gt)));
        }
        for _ in 0..167 {
            pairs.push((wrong(3), p(gt)));
        }
        let (all, ge6, ge5) = recognition_rates(&pairs).unwrap();
        assert_eq!((all, ge6, ge5), (0.498, 0.712, 0.833));
    }

    #[test]
    fn rates_match_brute_force_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let alphabet = Alphabet;
        let rand_plate = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
            (0..PLATE_LEN).map(|_| alphabet.symbol(rng.gen_range(0..36))).collect()
        };
        let pairs: Vec<(String, String)> = (0..1000)
            .map(|_| (rand_plate(&mut rng), rand_plate(&mut rng)))
            .collect();
        let (all, ge6, ge5) = recognition_rates(&pairs).unwrap();

        let mut counts = [0usize; 3];
        for (pred, gt) in &pairs {
            let c = pred
                .chars()
                .zip(gt.chars())
                .filter(|(a, b)| a == b)
                .count();
            if c == 7 {
                counts[0] += 1;
            }
            if c >= 6 {
                counts[1] += 1;
            }
            if c >= 5 {
                counts[2] += 1;
            }
        }
        assert_eq!(all, counts[0] as f64 / 1000.0);
        assert_eq!(ge6, counts[1] as f64 / 1000.0);
        assert_eq!(ge5, counts[2] as f64 / 1000.0);
        assert!(all <= ge6 && ge6 <= ge5);
    }

    #[test]
    fn psnr_closed_form_and_cap() {
        let a = ImageTensor::filled(8, 8, 0.25);
        let b = ImageTensor::filled(8, 8, 0.75);
        let v = psnr(&a, &b).unwrap();
        assert!((v - 6.020599913279624).abs() < 1e-9, "{v}");
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn psnr_rejects_shape_mismatch() {
        let a = ImageTensor::filled(8, 8, 0.0);
        let b = ImageTensor::filled(8, 9, 0.0);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn report_invariants_hold() {
        let mk = |pred: &str, id: usize| SampleEval {
            id: format!("s{id}"),
            gt: p("ABC1234"),
            pred: p(pred),
            correct_chars: correct_chars(pred, "ABC1234").unwrap(),
            psnr: 20.0,
            ssim: 0.5,
        };
        let report = MetricsReport::from_samples(vec![
            mk("ABC1234", 0),
            mk("ABC1239", 1),
            mk("ZZZ1234", 2),
        ])
        .unwrap();
        assert!(report.rr_all <= report.rr_ge6 && report.rr_ge6 <= report.rr_ge5);
        assert_eq!(report.n, 3);
        assert!((report.rr_all - 1.0 / 3.0).abs() < 1e-12);
        assert!(MetricsReport::from_samples(vec![]).is_err());
    }
}
