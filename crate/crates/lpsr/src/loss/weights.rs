//! Per-class penalty weights and the confusion-matrix-driven update applied
//! after each validation epoch.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::alphabet::NUM_CLASSES;
use crate::error::Result;

/// Length-C vector of per-class cross-entropy weights. Entries start at 1
/// ("no penalization") and grow by alpha when a class is frequently confused,
/// capped at `w_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    w: Vec<f64>,
    w_max: f64,
}

impl PenaltyWeights {
    pub fn new(w_max: f64) -> Self {
        assert!(w_max >= 1.0);
        PenaltyWeights {
            w: vec![1.0; NUM_CLASSES],
            w_max,
        }
    }

    pub fn from_values(w: Vec<f64>, w_max: f64) -> Self {
        assert_eq!(w.len(), NUM_CLASSES);
        assert!(w.iter().all(|&v| (1.0..=w_max).contains(&v)));
        PenaltyWeights { w, w_max }
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn get(&self, class: usize) -> f64 {
        self.w[class]
    }

    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.w.clone(), NUM_CLASSES, device)?.to_dtype(dtype)?)
    }

    /// Short digest of the weight vector for history records.
    pub fn digest(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.w {
            for b in v.to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{hash:016x}")
    }
}

/// C×C confusion counts: `counts[gt][pred]` over evaluated character positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new()
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        ConfusionMatrix {
            counts: vec![0; NUM_CLASSES * NUM_CLASSES],
        }
    }

    pub fn record(&mut self, gt: usize, pred: usize) {
        self.counts[gt * NUM_CLASSES + pred] += 1;
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * NUM_CLASSES + pred]
    }

    pub fn row_total(&self, gt: usize) -> u64 {
        self.counts[gt * NUM_CLASSES..(gt + 1) * NUM_CLASSES]
            .iter()
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Threshold defining "frequently confused": an off-diagonal entry qualifies
/// when it reaches both `min_count` and `row_fraction` of its row total.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfusionRule {
    pub min_count: u64,
    pub row_fraction: f64,
}

impl Default for ConfusionRule {
    fn default() -> Self {
        ConfusionRule {
            min_count: 5,
            row_fraction: 0.1,
        }
    }
}

impl ConfusionRule {
    fn qualifies(&self, count: u64, row_total: u64) -> bool {
        if count == 0 || row_total == 0 {
            return false;
        }
        let threshold = (self.min_count as f64).max(self.row_fraction * row_total as f64);
        count as f64 >= threshold
    }
}

/// Returns a new weight vector with alpha added to every GT class that has a
/// qualifying off-diagonal confusion, capped at `w_max`. The input is not
/// mutated.
pub fn update_penalty_weights(
    weights: &PenaltyWeights,
    cm: &ConfusionMatrix,
    alpha: f64,
    rule: &ConfusionRule,
) -> PenaltyWeights {
    assert!(alpha >= 0.0);
    let mut out = weights.clone();
    for gt in 0..NUM_CLASSES {
        let row_total = cm.row_total(gt);
        let confused = (0..NUM_CLASSES)
            .any(|pred| pred != gt && rule.qualifies(cm.get(gt, pred), row_total));
        if confused {
            out.w[gt] = (out.w[gt] + alpha).min(out.w_max);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;

    #[test]
    fn diagonal_matrix_leaves_weights_unchanged() {
        let w = PenaltyWeights::new(5.0);
        let mut cm = ConfusionMatrix::new();
        for c in 0..NUM_CLASSES {
            for _ in 0..20 {
                cm.record(c, c);
            }
        }
        let updated = update_penalty_weights(&w, &cm, 0.1, &ConfusionRule::default());
        assert_eq!(updated, w);
    }

    #[test]
    fn dominant_confusion_bumps_only_the_gt_class() {
        let a = Alphabet;
        let s = a.class_of('S').unwrap();
        let five = a.class_of('5').unwrap();
        let w = PenaltyWeights::new(5.0);
        let mut cm = ConfusionMatrix::new();
        for _ in 0..40 {
            cm.record(s, five);
        }
        for _ in 0..10 {
            cm.record(s, s);
        }
        let updated = update_penalty_weights(&w, &cm, 0.1, &ConfusionRule::default());
        for c in 0..NUM_CLASSES {
            if c == s {
                assert!((updated.get(c) - 1.1).abs() < 1e-12);
            } else {
                assert_eq!(updated.get(c), 1.0);
            }
        }
    }

    #[test]
    fn repeated_updates_saturate_at_w_max() {
        let a = Alphabet;
        let s = a.class_of('S').unwrap();
        let five = a.class_of('5').unwrap();
        let mut cm = ConfusionMatrix::new();
        for _ in 0..50 {
            cm.record(s, five);
        }
        let mut w = PenaltyWeights::new(1.5);
        for _ in 0..20 {
            w = update_penalty_weights(&w, &cm, 0.1, &ConfusionRule::default());
        }
        assert!((w.get(s) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn update_is_monotone_non_decreasing() {
        let mut cm = ConfusionMatrix::new();
        for gt in 0..NUM_CLASSES {
            for pred in 0..NUM_CLASSES {
                cm.record(gt, pred);
            }
        }
        let w = PenaltyWeights::new(5.0);
        let updated = update_penalty_weights(&w, &cm, 0.25, &ConfusionRule::default());
        for c in 0..NUM_CLASSES {
            assert!(updated.get(c) >= w.get(c));
        }
    }

    #[test]
    fn below_threshold_confusion_ignored() {
        let mut cm = ConfusionMatrix::new();
        // 4 confusions in a row of 100: below both min_count=5 and 10%.
        for _ in 0..96 {
            cm.record(0, 0);
        }
        for _ in 0..4 {
            cm.record(0, 1);
        }
        let w = PenaltyWeights::new(5.0);
        let updated = update_penalty_weights(&w, &cm, 0.1, &ConfusionRule::default());
        assert_eq!(updated, w);
    }
}
