//! Contrast-limited adaptive histogram equalization.
//!
//! The image is partitioned into a `rows x cols` grid of tiles. Each tile gets a
//! 256-bin histogram, clipped at `clip_limit` times the mean bin height, with the
//! clipped excess spread evenly over all bins. A tile's transfer curve is its
//! midpoint rank: `T(v) = 256 * (C(v - 1) + h(v) / 2) / n - 0.5`, which is the
//! identity for a flat histogram. Per-pixel outputs blend the transfer curves of
//! the four nearest tile centers bilinearly; pixels outside the outermost
//! centers use the nearest tiles only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::color::{lab_to_rgb, rgb_to_lab, LabImage};
use crate::imaging::raster::{ColorSpace, RasterImage};

const BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheParams {
    pub clip_limit: f64,
    pub tile_rows: usize,
    pub tile_cols: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            clip_limit: 2.0,
            tile_rows: 8,
            tile_cols: 8,
        }
    }
}

impl ClaheParams {
    pub fn new(clip_limit: f64, tile_rows: usize, tile_cols: usize) -> Self {
        ClaheParams {
            clip_limit,
            tile_rows,
            tile_cols,
        }
    }

    /// Checks the settings on their own, without an image.
    pub fn validate_params(&self) -> Result<()> {
        if !self.clip_limit.is_finite() || self.clip_limit <= 0.0 {
            return Err(Error::Config(format!("CLAHE clip limit must be positive, got {}", self.clip_limit)));
        }
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return Err(Error::Config("CLAHE tile grid needs at least one row and column".into()));
        }
        Ok(())
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        self.validate_params()?;
        if height == 0 || width == 0 {
            return Err(Error::Config("CLAHE input channel is empty".into()));
        }
        if self.tile_rows > height || self.tile_cols > width {
            return Err(Error::Config(format!(
                "CLAHE tile grid {}x{} exceeds the {height}x{width} image",
                self.tile_rows, self.tile_cols
            )));
        }
        Ok(())
    }
}

/// Integer partition of `len` pixels into `parts` contiguous spans.
fn span_edges(len: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|i| i * len / parts).collect()
}

/// Locates the pair of tile centers bracketing `pos` and the weight of the second.
fn bracket(centers: &[f64], pos: f64) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if pos <= centers[0] {
        return (0, 0, 0.0);
    }
    if pos >= centers[last] {
        return (last, last, 0.0);
    }
    let hi = centers.partition_point(|&c| c <= pos);
    let lo = hi - 1;
    let t = (pos - centers[lo]) / (centers[hi] - centers[lo]);
    (lo, hi, t)
}

fn transfer_curve(hist: &[u32; BINS], count: usize, clip_limit: f64) -> [f64; BINS] {
    let limit = clip_limit * count as f64 / BINS as f64;
    let mut clipped = [0.0f64; BINS];
    let mut excess = 0.0;
    for (dst, &h) in clipped.iter_mut().zip(hist.iter()) {
        let h = h as f64;
        if h > limit {
            excess += h - limit;
            *dst = limit;
        } else {
            *dst = h;
        }
    }
    let share = excess / BINS as f64;
    let mut curve = [0.0; BINS];
    let mut below = 0.0;
    for v in 0..BINS {
        let h = clipped[v] + share;
        let rank = below + 0.5 * h;
        curve[v] = (BINS as f64 * rank / count as f64 - 0.5).clamp(0.0, 255.0);
        below += h;
    }
    curve
}

/// CLAHE over continuous levels in `[0, 255]`.
///
/// Histograms bin each value at its nearest integer level; outputs interpolate
/// the transfer curve linearly between integer levels.
pub(crate) fn clahe_levels(values: &[f32], height: usize, width: usize, params: &ClaheParams) -> Result<Vec<f32>> {
    params.validate(height, width)?;
    if values.len() != height * width {
        return Err(Error::Contract("CLAHE input length does not match its dimensions".into()));
    }
    let rows = span_edges(height, params.tile_rows);
    let cols = span_edges(width, params.tile_cols);
    let bin_of = |v: f32| (v.round() as i64).clamp(0, 255) as usize;

    let mut curves = Vec::with_capacity(params.tile_rows * params.tile_cols);
    for ty in 0..params.tile_rows {
        for tx in 0..params.tile_cols {
            let mut hist = [0u32; BINS];
            for y in rows[ty]..rows[ty + 1] {
                for &v in &values[y * width + cols[tx]..y * width + cols[tx + 1]] {
                    hist[bin_of(v)] += 1;
                }
            }
            let count = (rows[ty + 1] - rows[ty]) * (cols[tx + 1] - cols[tx]);
            curves.push(transfer_curve(&hist, count, params.clip_limit));
        }
    }

    let centers = |edges: &[usize]| -> Vec<f64> {
        edges.windows(2).map(|w| (w[0] + w[1]) as f64 / 2.0 - 0.5).collect()
    };
    let row_centers = centers(&rows);
    let col_centers = centers(&cols);
    let col_brackets: Vec<_> = (0..width).map(|x| bracket(&col_centers, x as f64)).collect();

    let lookup = |curve: &[f64; BINS], v: f32| -> f64 {
        let v = (v as f64).clamp(0.0, 255.0);
        let lo = v.floor() as usize;
        let hi = (lo + 1).min(BINS - 1);
        let t = v - lo as f64;
        curve[lo] * (1.0 - t) + curve[hi] * t
    };

    let mut out = vec![0.0f32; values.len()];
    for y in 0..height {
        let (r0, r1, wy) = bracket(&row_centers, y as f64);
        for x in 0..width {
            let (c0, c1, wx) = col_brackets[x];
            let v = values[y * width + x];
            let top = lookup(&curves[r0 * params.tile_cols + c0], v) * (1.0 - wx)
                + lookup(&curves[r0 * params.tile_cols + c1], v) * wx;
            let bottom = lookup(&curves[r1 * params.tile_cols + c0], v) * (1.0 - wx)
                + lookup(&curves[r1 * params.tile_cols + c1], v) * wx;
            out[y * width + x] = (top * (1.0 - wy) + bottom * wy).clamp(0.0, 255.0) as f32;
        }
    }
    Ok(out)
}

/// Applies CLAHE to a single-channel 8-bit image.
pub fn clahe_channel(channel: &RasterImage, params: &ClaheParams) -> Result<RasterImage> {
    if channel.color_space() != ColorSpace::Gray {
        return Err(Error::InvalidColorSpace {
            expected: "GRAY",
            actual: channel.color_space().name(),
        });
    }
    let (h, w) = channel.dims();
    params.validate(h, w)?;
    let values: Vec<f32> = channel.data().iter().map(|&v| v as f32).collect();
    let out = clahe_levels(&values, h, w, params)?;
    let data = out.into_iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    RasterImage::new(h, w, ColorSpace::Gray, data)
}

/// Equalizes lightness only; A and B are carried through untouched.
pub fn enhance_lab(lab: LabImage, params: &ClaheParams) -> Result<LabImage> {
    let (h, w) = (lab.height(), lab.width());
    let levels: Vec<f32> = lab.l().iter().map(|&l| l * 2.55).collect();
    let equalized = clahe_levels(&levels, h, w, params)?;
    lab.with_lightness(equalized.into_iter().map(|v| v / 2.55).collect())
}

/// CLAHE on the L channel of an RGB image, converted back to RGB.
pub fn enhance_contrast_lab(img: &RasterImage, params: &ClaheParams) -> Result<RasterImage> {
    let lab = rgb_to_lab(img)?;
    Ok(lab_to_rgb(&enhance_lab(lab, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_stays_within_one_level() {
        for v in [0u8, 1, 40, 77, 128, 200, 254, 255] {
            let img = RasterImage::filled(64, 64, ColorSpace::Gray, v);
            let out = clahe_channel(&img, &ClaheParams::default()).unwrap();
            let first = out.data()[0];
            assert!(out.data().iter().all(|&p| p == first));
            assert!((first as i32 - v as i32).abs() <= 1, "{v} -> {first}");
        }
    }

    #[test]
    fn flat_histogram_is_identity() {
        // Each 16x16 tile holds every level exactly once.
        let img = RasterImage::from_fn_gray(32, 32, |y, x| ((y % 16) * 16 + x % 16) as u8);
        let out = clahe_channel(&img, &ClaheParams::new(2.0, 2, 2)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn shape_is_preserved() {
        let img = RasterImage::from_fn_gray(37, 53, |y, x| ((y * 7 + x * 3) % 256) as u8);
        let out = clahe_channel(&img, &ClaheParams::default()).unwrap();
        assert_eq!(out.dims(), (37, 53));
        assert_eq!(out.data().len(), img.data().len());
    }

    #[test]
    fn tile_grid_larger_than_image_is_rejected() {
        let img = RasterImage::filled(4, 16, ColorSpace::Gray, 9);
        let err = clahe_channel(&img, &ClaheParams::new(2.0, 8, 8)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(clahe_channel(&img, &ClaheParams::new(0.0, 2, 2)).is_err());
        assert!(clahe_channel(&img, &ClaheParams::new(2.0, 0, 2)).is_err());
    }

    #[test]
    fn enhance_passes_chroma_through() {
        let img = RasterImage::from_fn_rgb(40, 40, |y, x| [(90 + y) as u8, (50 + x) as u8, 40]);
        let lab = rgb_to_lab(&img).unwrap();
        let enhanced = enhance_lab(lab.clone(), &ClaheParams::new(2.0, 4, 4)).unwrap();
        assert_eq!(enhanced.a(), lab.a());
        assert_eq!(enhanced.b(), lab.b());
    }

    #[test]
    fn constant_color_is_nearly_fixed() {
        for color in [[120u8, 60, 30], [10, 10, 10], [250, 240, 230], [0, 0, 0]] {
            let img = RasterImage::from_fn_rgb(32, 32, |_, _| color);
            let out = enhance_contrast_lab(&img, &ClaheParams::default()).unwrap();
            for (a, b) in img.data().iter().zip(out.data()) {
                assert!((*a as i32 - *b as i32).abs() <= 2, "{color:?}: {a} vs {b}");
            }
        }
    }
}
