use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ColorSpace, RasterImage};

/// Pixel tallies with the lesion (value 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Positives in the ground truth.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Negatives in the ground truth.
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn record(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts::new(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

/// Tallies two strictly binary {0, 1} slices of equal length.
pub fn confusion_from_slices(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "prediction has {} pixels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        if p > 1 || t > 1 {
            return Err(Error::Contract(format!("mask values must be 0 or 1, found {}", p.max(t))));
        }
        c.record(p == 1, t == 1);
    }
    Ok(c)
}

pub fn confusion(pred: &RasterImage, truth: &RasterImage) -> Result<ConfusionCounts> {
    for m in [pred, truth] {
        if m.color_space() != ColorSpace::Gray {
            return Err(Error::Contract("masks must be single-channel".into()));
        }
    }
    if pred.dims() != truth.dims() {
        return Err(Error::Contract(format!(
            "prediction is {:?}, truth is {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    confusion_from_slices(pred.data(), truth.data())
}
