//! Classification and segmentation metrics: F1, ROC-AUC, PR-AUC (average
//! precision) and IoU.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no relevant items: tp + fp + fn == 0")]
    NoRelevantItems,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("labels contain no positives")]
    NoPositives,
    #[error("scores must be finite")]
    NonFinite,
    #[error("masks differ in size ({a} vs {b})")]
    ShapeMismatch { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Counts at a decision threshold: `score >= threshold` predicts positive.
    pub fn at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Self::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

/// F1 score; zero when there are no true positives.
pub fn f1_score(c: &ConfusionCounts) -> Result<f64, MetricError> {
    if c.tp + c.fp + c.fn_ == 0 {
        return Err(MetricError::NoRelevantItems);
    }
    if c.tp == 0 {
        return Ok(0.0);
    }
    let (p, r) = (c.precision(), c.recall());
    Ok(2.0 * p * r / (p + r))
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_scored(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let order = descending(scores);
    // walk tie blocks from the top; each positive beats every negative below its block
    let mut wins = 0.0;
    let mut neg_above = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos = order[i..j].iter().filter(|&&k| labels[k]).count();
        let neg = (j - i) - pos;
        wins += pos as f64 * (n_neg - neg_above - neg) as f64 + 0.5 * (pos * neg) as f64;
        neg_above += neg;
        i = j;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Average precision: `sum_k (R_k - R_{k-1}) * P_k` over descending score
/// thresholds, with tied scores forming a single threshold.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_scored(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let order = descending(scores);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let new_tp = order[i..j].iter().filter(|&&k| labels[k]).count();
        tp += new_tp;
        seen = j;
        if new_tp > 0 {
            ap += new_tp as f64 / n_pos as f64 * (tp as f64 / seen as f64);
        }
        i = j;
    }
    debug_assert_eq!(seen, order.len());
    Ok(ap)
}

/// Intersection over union of two equally sized binary masks; 1 when both are empty.
pub fn iou(a: &[bool], b: &[bool]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&counts(1, 1, 1)).unwrap(), 0.5);
        assert_eq!(f1_score(&counts(10, 0, 0)).unwrap(), 1.0);
        assert!((f1_score(&counts(3, 1, 2)).unwrap() - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
        assert_eq!(f1_score(&counts(0, 4, 2)).unwrap(), 0.0);
        assert_eq!(f1_score(&counts(0, 0, 0)), Err(MetricError::NoRelevantItems));
    }

    #[test]
    fn roc_examples() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [false, false, true, true];
        assert_eq!(roc_auc(&s, &y).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.5; 4], &y).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.0, 0.1, 0.9, 1.0], &y).unwrap(), 1.0);
        assert_eq!(roc_auc(&s, &[true; 4]), Err(MetricError::SingleClass));
    }

    #[test]
    fn pr_examples() {
        let y = [true, true, false, false];
        assert_eq!(pr_auc(&[0.9, 0.8, 0.2, 0.1], &y).unwrap(), 1.0);
        assert_eq!(
            pr_auc(&[0.1, 0.9, 0.8, 0.7], &[true, false, false, false]).unwrap(),
            0.25
        );
        assert_eq!(pr_auc(&[0.5; 4], &[false; 4]), Err(MetricError::NoPositives));
        // a tie block containing both classes counts as one threshold
        assert_eq!(pr_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&[true, true, false], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(iou(&[true, false], &[false, true]).unwrap(), 0.0);
        assert_eq!(iou(&[false; 3], &[false; 3]).unwrap(), 1.0);
        let a = [true, true, false];
        let b = [false, true, true];
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(iou(&a, &[true]), Err(MetricError::ShapeMismatch { .. })));
    }
}
