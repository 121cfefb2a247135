use crate::error::{Error, Result};

pub const BCE_EPSILON: f64 = 1e-7;

/// Mean binary cross-entropy of probabilities against {0, 1} labels, with
/// predictions clamped to `[eps, 1 - eps]`.
pub fn binary_cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Contract("binary cross-entropy of zero elements".into()));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / pred.len() as f64)
}
