use serde::{Deserialize, Serialize};

use crate::imaging::raster::{CropRect, RasterImage};

/// Settings for foreground cropping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropParams {
    /// Pixels whose gray level is strictly above this count as foreground.
    pub background_threshold: u8,
    /// Extra pixels kept around the foreground box on every side.
    pub margin: usize,
}

impl Default for CropParams {
    fn default() -> Self {
        CropParams {
            background_threshold: 15,
            margin: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CropOutcome {
    pub image: RasterImage,
    pub rect: CropRect,
    /// Set when nothing exceeded the threshold and the full frame was kept.
    pub no_foreground: bool,
}

/// Tightest box around pixels brighter than the threshold, grown by the margin
/// and clamped to the frame. `None` when no pixel qualifies.
pub fn foreground_rect(img: &RasterImage, params: &CropParams) -> Option<CropRect> {
    let gray = img.to_gray();
    let (h, w) = gray.dims();
    let data = gray.data();
    let (mut top, mut bottom, mut left, mut right) = (usize::MAX, 0, usize::MAX, 0);
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        let first = row.iter().position(|&v| v > params.background_threshold);
        if let Some(first) = first {
            let last = row.iter().rposition(|&v| v > params.background_threshold).unwrap_or(first);
            top = top.min(y);
            bottom = bottom.max(y);
            left = left.min(first);
            right = right.max(last);
        }
    }
    if top == usize::MAX {
        return None;
    }
    let top = top.saturating_sub(params.margin);
    let left = left.saturating_sub(params.margin);
    let bottom = (bottom + params.margin).min(h - 1);
    let right = (right + params.margin).min(w - 1);
    Some(CropRect {
        top,
        left,
        height: bottom - top + 1,
        width: right - left + 1,
    })
}

/// Crops away the dark surround of a fundus photograph.
///
/// An all-background frame yields the identity crop with `no_foreground` set.
pub fn crop_fundus(img: &RasterImage, params: &CropParams) -> CropOutcome {
    match foreground_rect(img, params) {
        Some(rect) => CropOutcome {
            image: img.sub_image(&rect).expect("foreground rect lies inside the frame"),
            rect,
            no_foreground: false,
        },
        None => {
            log::warn!(
                "no pixel above threshold {}; keeping the full {}x{} frame",
                params.background_threshold,
                img.height(),
                img.width()
            );
            CropOutcome {
                image: img.clone(),
                rect: CropRect::full(img.height(), img.width()),
                no_foreground: true,
            }
        }
    }
}
