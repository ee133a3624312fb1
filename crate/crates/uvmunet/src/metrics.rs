//! Binary segmentation evaluation: confusion counts and the four standard
//! scores derived from them.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::Serialize;

/// Pixel tallies of one prediction/ground-truth pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Binarizes `pred` at `threshold` (ties count as positive) and tallies it
/// against the binary `truth` mask. Shapes must match exactly.
pub fn confusion(pred: &Tensor, truth: &Tensor, threshold: f32) -> Result<ConfusionCounts> {
    if pred.shape() != truth.shape() {
        return Err(Error::dim(
            "confusion",
            format!("pred {:?} vs truth {:?}", pred.shape(), truth.shape()),
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let p = p >= threshold;
        let t = t >= 0.5;
        match (p, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Handles an empty denominator: 1.0 when the corresponding ground-truth
/// class is empty and the prediction agrees (no stray counts), else 0.0.
fn guarded(numer: u64, denom: u64, strays: u64) -> f64 {
    if denom == 0 {
        if strays == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        numer as f64 / denom as f64
    }
}

/// Dice similarity coefficient `2TP / (2TP + FP + FN)`.
pub fn dsc(c: &ConfusionCounts) -> f64 {
    guarded(2 * c.tp, 2 * c.tp + c.fp + c.fn_, 0)
}

/// Sensitivity `TP / (TP + FN)`.
pub fn se(c: &ConfusionCounts) -> f64 {
    guarded(c.tp, c.tp + c.fn_, c.fp)
}

/// Specificity `TN / (TN + FP)`.
pub fn sp(c: &ConfusionCounts) -> f64 {
    guarded(c.tn, c.tn + c.fp, c.fn_)
}

/// Accuracy `(TP + TN) / (TP + TN + FP + FN)`.
pub fn acc(c: &ConfusionCounts) -> f64 {
    guarded(c.tp + c.tn, c.total(), 0)
}
