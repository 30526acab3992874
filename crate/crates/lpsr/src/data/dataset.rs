//! Dataset construction and the JSON-lines manifest serving train/val/test
//! splits of LR/HR plate pairs.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{LayoutId, LayoutSpec, LpLabel, CharClass, PLATE_LEN};
use crate::data::degrade::{degrade, DegradeParams};
use crate::data::render::{render_plate, RenderStyle};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, HR_HEIGHT, HR_WIDTH, LR_HEIGHT, LR_WIDTH};
use crate::loss::SsimParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub count_brazilian: usize,
    pub count_mercosur: usize,
    pub split: SplitFractions,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub style: RenderStyle,
    pub degrade: DegradeParams,
    pub ssim: SsimParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            count_brazilian: 50,
            count_mercosur: 50,
            split: SplitFractions::default(),
            out_dir: PathBuf::from("dataset"),
            seed: 0,
            style: RenderStyle::default(),
            degrade: DegradeParams::default(),
            ssim: SsimParams::default(),
        }
    }
}

/// One manifest line; paths are relative to the manifest file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub lr_path: String,
    pub hr_path: String,
    pub text: String,
    pub layout: LayoutId,
    pub split: Split,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    /// Directory the entry paths are relative to.
    pub base_dir: PathBuf,
}

/// An LR/HR pair with its label, as loaded from a manifest entry.
#[derive(Debug, Clone)]
pub struct LpSample {
    pub id: String,
    pub lr: ImageTensor,
    pub hr: ImageTensor,
    pub label: LpLabel,
    pub degradation_ssim: f64,
}

impl DatasetManifest {
    pub fn manifest_path(dir: &Path) -> PathBuf {
        dir.join("manifest.jsonl")
    }

    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = Self::manifest_path(dir);
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for entry in &self.entries {
            let line = serde_json::to_string(entry)?;
            writeln!(file, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        let meta_path = dir.join("manifest.meta.json");
        let meta = serde_json::json!({ "seed": self.seed });
        fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
            .map_err(|e| Error::io(&meta_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::manifest_path(dir);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", n + 1)))?;
            entries.push(entry);
        }
        let seed = match fs::read_to_string(dir.join("manifest.meta.json")) {
            Ok(meta) => serde_json::from_str::<serde_json::Value>(&meta)
                .ok()
                .and_then(|v| v.get("seed").and_then(|s| s.as_u64()))
                .unwrap_or(0),
            Err(_) => 0,
        };
        Ok(DatasetManifest {
            entries,
            seed,
            base_dir: dir.to_path_buf(),
        })
    }

    pub fn load_sample(&self, entry: &ManifestEntry) -> Result<LpSample> {
        let load = || -> Result<LpSample> {
            let lr = ImageTensor::load_png(self.base_dir.join(&entry.lr_path))?;
            let hr = ImageTensor::load_png(self.base_dir.join(&entry.hr_path))?;
            lr.expect_shape(LR_HEIGHT, LR_WIDTH)?;
            hr.expect_shape(HR_HEIGHT, HR_WIDTH)?;
            let label = LpLabel::new(entry.text.clone(), entry.layout)?;
            Ok(LpSample {
                id: entry.id.clone(),
                lr,
                hr,
                label,
                degradation_ssim: entry.ssim,
            })
        };
        load().map_err(|e| Error::for_sample(&entry.id, e))
    }

    /// Check that every entry's files exist and decode to the declared sizes.
    pub fn verify(&self) -> Result<()> {
        for entry in &self.entries {
            self.load_sample(entry)?;
        }
        Ok(())
    }
}

/// Draw a uniformly random label for the layout (letters A-Z, digits 0-9 at
/// the layout-mandated positions).
pub fn random_label(layout: LayoutId, rng: &mut impl Rng) -> LpLabel {
    let LayoutSpec { pattern, .. } = layout.spec();
    let text: String = pattern
        .iter()
        .map(|class| match class {
            CharClass::Letter => (b'A' + rng.gen_range(0..26)) as char,
            CharClass::Digit => (b'0' + rng.gen_range(0..10)) as char,
        })
        .collect();
    debug_assert_eq!(text.len(), PLATE_LEN);
    LpLabel { text, layout }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn split_counts(n: usize, fractions: &SplitFractions) -> Result<(usize, usize, usize)> {
    let sum = fractions.train + fractions.val + fractions.test;
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "split fractions sum to {sum}, expected 1"
        )));
    }
    let n_train = (fractions.train * n as f64).round() as usize;
    let n_val = (fractions.val * n as f64).round() as usize;
    let n_val = n_val.min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let n_test = n - n_train - n_val;
    Ok((n_train, n_val, n_test))
}

/// Render, degrade, and write every sample, then the manifest. Each sample's
/// RNG stream derives from (config seed, sample id), so rendering is
/// parallel yet deterministic.
pub fn build_dataset(config: &DataConfig) -> Result<DatasetManifest> {
    let out_dir = &config.out_dir;
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;

    let n = config.count_brazilian + config.count_mercosur;
    let (n_train, n_val, _n_test) = split_counts(n, &config.split)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut planned: Vec<(String, LpLabel)> = Vec::with_capacity(n);
    for i in 0..config.count_brazilian {
        planned.push((
            format!("br_{i:06}"),
            random_label(LayoutId::Brazilian, &mut rng),
        ));
    }
    for i in 0..config.count_mercosur {
        planned.push((
            format!("mc_{i:06}"),
            random_label(LayoutId::Mercosur, &mut rng),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut splits = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let entries: Vec<ManifestEntry> = planned
        .par_iter()
        .zip(splits.par_iter())
        .map(|((id, label), &split)| -> Result<ManifestEntry> {
            let sample_seed = config.seed ^ fnv1a(id.as_bytes());
            let hr = render_plate(label, &config.style, sample_seed)
                .map_err(|e| Error::for_sample(id, e))?;
            let (lr, ssim) = degrade(
                &hr,
                &config.degrade,
                &config.ssim,
                sample_seed.wrapping_add(1),
            )
            .map_err(|e| Error::for_sample(id, e))?;
            let lr_path = format!("images/{id}_lr.png");
            let hr_path = format!("images/{id}_hr.png");
            lr.save_png(out_dir.join(&lr_path))?;
            hr.save_png(out_dir.join(&hr_path))?;
            Ok(ManifestEntry {
                id: id.clone(),
                lr_path,
                hr_path,
                text: label.text.clone(),
                layout: label.layout,
                split,
                ssim,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        entries,
        seed: config.seed,
        base_dir: out_dir.clone(),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_honor_fractions() {
        let (tr, va, te) = split_counts(100, &SplitFractions::default()).unwrap();
        assert_eq!((tr, va, te), (80, 10, 10));
    }

    #[test]
    fn bad_split_fractions_rejected() {
        let fr = SplitFractions {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(split_counts(10, &fr).is_err());
    }

    #[test]
    fn random_labels_satisfy_their_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let layout = if rng.gen_bool(0.5) {
                LayoutId::Brazilian
            } else {
                LayoutId::Mercosur
            };
            let label = random_label(layout, &mut rng);
            label.validate().expect("generated label must satisfy layout");
        }
    }

    #[test]
    fn build_small_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let config = DataConfig {
            count_brazilian: 5,
            count_mercosur: 5,
            out_dir: dir.path().to_path_buf(),
            seed: 21,
            ..DataConfig::default()
        };
        let manifest = build_dataset(&config).unwrap();
        assert_eq!(manifest.entries.len(), 10);
        assert_eq!(manifest.split_entries(Split::Train).len(), 8);
        assert_eq!(manifest.split_entries(Split::Val).len(), 1);
        assert_eq!(manifest.split_entries(Split::Test).len(), 1);

        let reloaded = DatasetManifest::load(dir.path()).unwrap();
        assert_eq!(reloaded.entries.len(), 10);
        assert_eq!(reloaded.seed, 21);
        reloaded.verify().unwrap();

        for entry in &reloaded.entries {
            let sample = reloaded.load_sample(entry).unwrap();
            assert_eq!((sample.lr.height, sample.lr.width), (LR_HEIGHT, LR_WIDTH));
            assert_eq!((sample.hr.height, sample.hr.width), (HR_HEIGHT, HR_WIDTH));
            assert!(sample.degradation_ssim < 0.1);
        }
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mk = |dir: &Path| DataConfig {
            count_brazilian: 3,
            count_mercosur: 3,
            out_dir: dir.to_path_buf(),
            seed: 5,
            ..DataConfig::default()
        };
        let a = build_dataset(&mk(dir_a.path())).unwrap();
        let b = build_dataset(&mk(dir_b.path())).unwrap();
        for (ea, eb) in a.entries.iter().zip(&b.entries) {
            assert_eq!(ea.text, eb.text);
            assert_eq!(ea.ssim, eb.ssim);
            assert_eq!(ea.split, eb.split);
        }
    }
}
