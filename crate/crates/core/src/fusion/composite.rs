use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::LesionClass;
use crate::error::{Error, Result};
use crate::imaging::io::{read_gray_raw, write_image, write_mask};
use crate::imaging::{ColorSpace, RasterImage};

/// Bits of the label encoding that name a lesion class.
pub const CLASS_BITS: u8 = 0b1111;

/// Per-pixel lesion sets. Each pixel is a bitmask with bit 0 for EX, bit 1
/// for HE, bit 2 for MA and bit 3 for SE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl CompositeMask {
    pub fn empty(height: usize, width: usize) -> Self {
        CompositeMask {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    /// Builds a composite from raw bitmasks, rejecting bits above bit 3.
    pub fn from_labels(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Contract(format!(
                "{} labels for a {height}x{width} composite",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&v| v & !CLASS_BITS != 0) {
            return Err(Error::Contract(format!("label {bad} has bits outside the four classes")));
        }
        Ok(CompositeMask { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Lesion classes present at a pixel, in class order.
    pub fn classes_at(&self, y: usize, x: usize) -> Vec<LesionClass> {
        let v = self.at(y, x);
        LesionClass::ALL.into_iter().filter(|c| v & (1 << c.bit()) != 0).collect()
    }

    pub fn contains(&self, y: usize, x: usize, lesion: LesionClass) -> bool {
        self.at(y, x) & (1 << lesion.bit()) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.labels.iter().all(|&v| v == 0)
    }

    /// The `{0, 1}` mask of one class.
    pub fn extract(&self, lesion: LesionClass) -> RasterImage {
        let bit = 1 << lesion.bit();
        let data = self.labels.iter().map(|&v| u8::from(v & bit != 0)).collect();
        RasterImage::new(self.height, self.width, ColorSpace::Gray, data).expect("composite buffer matches its size")
    }

    /// Writes the single-channel label PNG; pixel value is the bitmask.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let img = RasterImage::new(self.height, self.width, ColorSpace::Gray, self.labels.clone())?;
        write_image(path, &img)
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = read_gray_raw(path)?;
        let (h, w) = img.dims();
        CompositeMask::from_labels(h, w, img.into_data())
    }

    /// Writes one `{0, 255}` PNG per class as `<dir>/<stem>_<CLASS>.png`.
    pub fn write_planes(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        LesionClass::ALL
            .into_iter()
            .map(|c| {
                let path = dir.join(format!("{stem}_{c}.png"));
                write_mask(&path, &self.extract(c))?;
                Ok(path)
            })
            .collect()
    }
}

/// Lossless union of the given binary masks. Absent classes stay empty.
pub fn fuse(masks: &BTreeMap<LesionClass, RasterImage>) -> Result<CompositeMask> {
    let mut iter = masks.iter();
    let Some((_, first)) = iter.next() else {
        return Err(Error::Contract("nothing to fuse".into()));
    };
    let (h, w) = first.dims();
    let mut comp = CompositeMask::empty(h, w);
    for (&lesion, mask) in masks {
        if mask.dims() != (h, w) {
            return Err(Error::Contract(format!(
                "{lesion} mask is {}x{}, expected {h}x{w}",
                mask.height(),
                mask.width()
            )));
        }
        if mask.channels() != 1 || !mask.is_binary() {
            return Err(Error::Contract(format!("{lesion} mask is not a single-channel binary mask")));
        }
        let bit = 1 << lesion.bit();
        for (label, &v) in comp.labels.iter_mut().zip(mask.data()) {
            if v != 0 {
                *label |= bit;
            }
        }
    }
    Ok(comp)
}
