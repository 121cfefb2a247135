use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

/// ROC points ordered by descending threshold. The first point has an
/// infinite threshold and sits at (0, 0); the last sits at (1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// Sweeps every distinct score as a threshold (predict positive when
/// `score >= threshold`) and integrates TPR over FPR with the trapezoid rule.
/// Tied scores move in one step, which is what makes constant scores give 0.5.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Contract(format!("score {bad} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "labels need both classes (got {pos} positive, {neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // exact trapezoid in count units, normalised once at the end
        auc += (fp - fp0) as f64 * (tp + tp0) as f64;
        thresholds.push(t);
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    }
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc: auc / (2.0 * pos as f64 * neg as f64),
    })
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.fpr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fpr.is_empty()
    }

    /// At most `max_points` points, always keeping the first and last.
    pub fn downsampled(&self, max_points: usize) -> RocCurve {
        let n = self.len();
        if n <= max_points || max_points < 2 {
            return self.clone();
        }
        let idx: Vec<usize> = (0..max_points)
            .map(|k| ((k as f64) * (n - 1) as f64 / (max_points - 1) as f64).round() as usize)
            .collect();
        let mut idx = idx;
        idx.dedup();
        RocCurve {
            thresholds: idx.iter().map(|&i| self.thresholds[i]).collect(),
            fpr: idx.iter().map(|&i| self.fpr[i]).collect(),
            tpr: idx.iter().map(|&i| self.tpr[i]).collect(),
            auc: self.auc,
        }
    }

    /// `threshold,fpr,tpr` rows; the leading infinite threshold is written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for i in 0..self.len() {
            let t = self.thresholds[i];
            if t.is_infinite() {
                s.push_str("inf");
            } else {
                write!(s, "{t}").expect("string write");
            }
            writeln!(s, ",{},{}", self.fpr[i], self.tpr[i]).expect("string write");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_path(parent)?;
        }
        std::fs::write(path, self.to_csv()).with_path(path)
    }
}
