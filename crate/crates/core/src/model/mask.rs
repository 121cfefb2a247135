use crate::error::{Error, Result};
use crate::imaging::{ColorSpace, RasterImage};
use crate::nn::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A probability map for one image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Contract(format!(
                "{} probabilities for a {height}x{width} map",
                values.len()
            )));
        }
        Ok(ProbabilityMap { height, width, values })
    }

    /// Splits an `N x H x W x 1` model output into per-image maps.
    pub fn from_batch(output: &Tensor) -> Result<Vec<ProbabilityMap>> {
        let s = output.shape();
        if s.len() != 4 || s[3] != 1 {
            return Err(Error::Contract(format!("expected N x H x W x 1 probabilities, got {s:?}")));
        }
        let per = s[1] * s[2];
        output
            .data()
            .chunks_exact(per.max(1))
            .take(s[0])
            .map(|c| ProbabilityMap::new(s[1], s[2], c.to_vec()))
            .collect()
    }

    /// Grayscale rendering with probability 1 as 255.
    pub fn to_heatmap(&self) -> RasterImage {
        RasterImage::from_fn_gray(self.height, self.width, |y, x| {
            (self.values[y * self.width + x] * 255.0).round().clamp(0.0, 255.0) as u8
        })
    }
}

/// `1` where the probability is at least `threshold`, else `0`.
pub fn binarize(probs: &ProbabilityMap, threshold: f64) -> Result<RasterImage> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Contract(format!("threshold {threshold} is not inside (0, 1)")));
    }
    if let Some(bad) = probs.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("probability {bad} outside [0, 1]")));
    }
    let data = probs.values.iter().map(|&p| u8::from(p >= threshold)).collect();
    RasterImage::new(probs.height, probs.width, ColorSpace::Gray, data)
}
