//! Fundus image preprocessing: color conversion, CLAHE, cropping and resizing.
//!
//! The full chain runs crop -> (augment) -> CLAHE on lightness -> resize. Masks
//! follow the geometric steps only.

pub mod clahe;
pub mod color;
pub mod crop;
pub mod geometry;
pub mod io;
pub mod raster;

use serde::{Deserialize, Serialize};

pub use clahe::{clahe_channel, enhance_contrast_lab, enhance_lab, ClaheParams};
pub use color::{lab_to_rgb, rgb_to_lab, LabImage};
pub use crop::{crop_fundus, CropOutcome, CropParams};
pub use geometry::{flip_horizontal, resize_pair, rotate, Interpolation};
pub use raster::{ColorSpace, CropRect, RasterImage};

use crate::error::Result;

/// Photometric and geometric settings applied right before a sample enters the model.
///
/// Stored in every checkpoint so inference reproduces the training inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSettings {
    pub clahe: ClaheParams,
    pub image_side: usize,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        PreprocessSettings {
            clahe: ClaheParams::default(),
            image_side: 512,
        }
    }
}

impl PreprocessSettings {
    /// CLAHE on lightness, then square resize. The mask is only resized.
    pub fn apply(&self, img: &RasterImage, mask: Option<&RasterImage>) -> Result<(RasterImage, Option<RasterImage>)> {
        let enhanced = enhance_contrast_lab(img, &self.clahe)?;
        resize_pair(&enhanced, mask, self.image_side)
    }
}
