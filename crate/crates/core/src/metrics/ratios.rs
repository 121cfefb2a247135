use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::confusion::ConfusionCounts;

/// Which ratios had a zero denominator and were filled by convention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub specificity: bool,
    pub sensitivity: bool,
    pub precision: bool,
    pub f1: bool,
    pub iou: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.specificity || self.sensitivity || self.precision || self.f1 || self.iou
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMetrics {
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    pub iou: f64,
    pub degenerate: DegenerateFlags,
}

/// `num / den`, or the convention value when `den` is zero: 1.0 if the
/// prediction is vacuously right (`vacuous`), else 0.0.
fn ratio(num: u64, den: u64, vacuous: bool, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        if vacuous {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, specificity, sensitivity, precision, F1 and foreground IoU.
///
/// Zero denominators are flagged. Sensitivity with no true positives in the
/// truth is 1.0 only if nothing was predicted positive either; specificity
/// and precision follow the mirrored rule; F1 and IoU are 1.0 when there is no
/// foreground anywhere.
pub fn ratio_metrics(c: &ConfusionCounts) -> Result<RatioMetrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Contract("ratio metrics of zero pixels".into()));
    }
    let mut d = DegenerateFlags::default();
    let accuracy = (c.tp + c.tn) as f64 / total as f64;
    let specificity = ratio(c.tn, c.tn + c.fp, c.fn_ == 0, &mut d.specificity);
    let sensitivity = ratio(c.tp, c.tp + c.fn_, c.fp == 0, &mut d.sensitivity);
    let precision = ratio(c.tp, c.tp + c.fp, c.fn_ == 0, &mut d.precision);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, true, &mut d.f1);
    let iou = ratio(c.tp, c.tp + c.fp + c.fn_, true, &mut d.iou);
    Ok(RatioMetrics {
        accuracy,
        specificity,
        sensitivity,
        precision,
        f1,
        iou,
        degenerate: d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub mse: f64,
}

/// Mean absolute and mean squared error between predictions and labels.
pub fn error_metrics(pred: &[f64], truth: &[f64]) -> Result<ErrorMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Contract("error metrics of zero elements".into()));
    }
    let (mut abs, mut sq) = (0.0, 0.0);
    for (&p, &y) in pred.iter().zip(truth) {
        let d = y - p;
        abs += d.abs();
        sq += d * d;
    }
    let n = pred.len() as f64;
    Ok(ErrorMetrics { mae: abs / n, mse: sq / n })
}
