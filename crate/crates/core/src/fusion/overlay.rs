use serde::{Deserialize, Serialize};

use crate::dataset::LesionClass;
use crate::error::{Error, Result};
use crate::fusion::composite::CompositeMask;
use crate::imaging::RasterImage;

/// Class colors and the order in which overlapping classes are drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorMap {
    /// Indexed by [`LesionClass::index`].
    pub colors: [[u8; 3]; 4],
    /// Highest priority first; a pixel in several classes takes the color of
    /// the first listed class it belongs to.
    pub priority: [LesionClass; 4],
}

impl Default for ColorMap {
    fn default() -> Self {
        ColorMap {
            colors: [
                [255, 215, 0],  // EX
                [220, 20, 60],  // HE
                [0, 200, 83],   // MA
                [30, 144, 255], // SE
            ],
            priority: [LesionClass::MA, LesionClass::SE, LesionClass::HE, LesionClass::EX],
        }
    }
}

impl ColorMap {
    pub fn color(&self, lesion: LesionClass) -> [u8; 3] {
        self.colors[lesion.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in i + 1..4 {
                if self.colors[i] == self.colors[j] {
                    return Err(Error::Config(format!(
                        "{} and {} share the color {:?}",
                        LesionClass::ALL[i],
                        LesionClass::ALL[j],
                        self.colors[i]
                    )));
                }
                if self.priority[i] == self.priority[j] {
                    return Err(Error::Config(format!("{} appears twice in the draw priority", self.priority[i])));
                }
            }
        }
        Ok(())
    }

    /// The class drawn for a label bitmask, if any.
    pub fn top_class(&self, label: u8) -> Option<LesionClass> {
        self.priority.into_iter().find(|c| label & (1 << c.bit()) != 0)
    }
}

/// Blends `(1 - alpha) * base + alpha * color` where the composite is
/// non-empty and copies the base elsewhere.
pub fn render_overlay(base: &RasterImage, comp: &CompositeMask, cmap: &ColorMap, alpha: f64) -> Result<RasterImage> {
    base.require_rgb()?;
    if base.dims() != comp.dims() {
        return Err(Error::Contract(format!(
            "base image is {}x{}, composite is {}x{}",
            base.height(),
            base.width(),
            comp.height(),
            comp.width()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha {alpha} is outside [0, 1]")));
    }
    cmap.validate()?;
    let mut out = base.clone();
    for (px, &label) in out.data_mut().chunks_exact_mut(3).zip(comp.labels()) {
        let Some(lesion) = cmap.top_class(label) else {
            continue;
        };
        let color = cmap.color(lesion);
        for (v, c) in px.iter_mut().zip(color) {
            *v = ((1.0 - alpha) * *v as f64 + alpha * c as f64).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}
