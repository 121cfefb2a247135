//! Report serialisation.
//!
//! A [`MetricReport`] is written as pretty JSON with these keys:
//! `definitions_version`, `lesion`, `aggregation` (`micro` or `macro`),
//! `threshold`, `images`, `pixels`, `counts` (`tp`, `tn`, `fp`, `fn`),
//! `accuracy`, `specificity`, `sensitivity`, `precision`, `f1`, `iou`, `mae`,
//! `mse`, `auc` (`null` when the truth has one class) and `degenerate`
//! (one boolean per ratio that hit a zero denominator).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::LesionClass;
use crate::error::{IoContext, Result};
use crate::metrics::confusion::ConfusionCounts;
use crate::metrics::evaluate::Aggregation;
use crate::metrics::ratios::DegenerateFlags;

/// Identifies the formulas behind every number in a report: standard
/// foreground IoU, precision TP/(TP+FP), MAE/MSE on probabilities, trapezoid
/// ROC AUC over unique thresholds.
pub const DEFINITIONS_VERSION: &str = "pixel-metrics/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub definitions_version: String,
    pub lesion: LesionClass,
    pub aggregation: Aggregation,
    pub threshold: f64,
    pub images: usize,
    pub pixels: u64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    pub iou: f64,
    pub mae: f64,
    pub mse: f64,
    pub auc: Option<f64>,
    pub degenerate: DegenerateFlags,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_path(parent)?;
        }
        std::fs::write(path, self.to_json()).with_path(path)
    }

    pub fn read_json(path: &Path) -> Result<MetricReport> {
        let text = std::fs::read_to_string(path).with_path(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// All per-class reports of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub definitions_version: String,
    pub reports: Vec<MetricReport>,
}

impl SummaryReport {
    pub fn new(mut reports: Vec<MetricReport>) -> Self {
        reports.sort_by_key(|r| r.lesion);
        SummaryReport {
            definitions_version: DEFINITIONS_VERSION.to_string(),
            reports,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises") + "\n"
    }
}

/// Metrics as rows and lesion classes as columns, five decimals.
pub fn markdown_table(reports: &[MetricReport]) -> String {
    let mut sorted: Vec<&MetricReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.lesion);
    let mut s = String::from("| Metric |");
    for r in &sorted {
        write!(s, " {} |", r.lesion).expect("string write");
    }
    s.push_str("\n|---|");
    for _ in &sorted {
        s.push_str("---|");
    }
    s.push('\n');
    type Row = (&'static str, fn(&MetricReport) -> Option<f64>);
    let rows: [Row; 9] = [
        ("Accuracy", |r| Some(r.accuracy)),
        ("Specificity", |r| Some(r.specificity)),
        ("Sensitivity", |r| Some(r.sensitivity)),
        ("Precision", |r| Some(r.precision)),
        ("F1 Score", |r| Some(r.f1)),
        ("IoU", |r| Some(r.iou)),
        ("MAE", |r| Some(r.mae)),
        ("MSE", |r| Some(r.mse)),
        ("AUC", |r| r.auc),
    ];
    for (name, get) in rows {
        write!(s, "| {name} |").expect("string write");
        for r in &sorted {
            match get(r) {
                Some(v) => write!(s, " {v:.5} |"),
                None => write!(s, " n/a |"),
            }
            .expect("string write");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(lesion: LesionClass, acc: f64) -> MetricReport {
        MetricReport {
            definitions_version: DEFINITIONS_VERSION.into(),
            lesion,
            aggregation: Aggregation::Micro,
            threshold: 0.5,
            images: 2,
            pixels: 8,
            counts: ConfusionCounts::new(2, 4, 1, 1),
            accuracy: acc,
            specificity: 0.8,
            sensitivity: 2.0 / 3.0,
            precision: 2.0 / 3.0,
            f1: 2.0 / 3.0,
            iou: 0.5,
            mae: 0.1,
            mse: 0.05,
            auc: None,
            degenerate: DegenerateFlags::default(),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let r = sample(LesionClass::MA, 0.75);
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_json().contains("\"auc\": null"));
    }

    #[test]
    fn table_has_a_column_per_class_in_order() {
        let t = markdown_table(&[sample(LesionClass::SE, 0.5), sample(LesionClass::EX, 0.75)]);
        let mut lines = t.lines();
        assert_eq!(lines.next().unwrap(), "| Metric | EX | SE |");
        assert!(t.contains("| Accuracy | 0.75000 | 0.50000 |"));
        assert!(t.contains("| AUC | n/a | n/a |"));
    }
}
