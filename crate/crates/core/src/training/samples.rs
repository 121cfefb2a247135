use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::imaging::io::{read_mask, read_rgb};
use crate::imaging::{PreprocessSettings, RasterImage};

/// Indexed access to (image, mask) pairs ready for the network.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn id(&self, index: usize) -> &str;

    /// RGB image and binary mask at the model's input size.
    fn load(&self, index: usize) -> Result<(RasterImage, RasterImage)>;
}

/// Pairs already decoded and preprocessed.
#[derive(Debug, Clone, Default)]
pub struct InMemorySamples {
    items: Vec<(String, RasterImage, RasterImage)>,
}

impl InMemorySamples {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, image: RasterImage, mask: RasterImage) -> Result<()> {
        if !image.same_dims(&mask) {
            return Err(Error::Pairing(format!(
                "image {:?} and mask {:?} differ in size",
                image.dims(),
                mask.dims()
            )));
        }
        self.items.push((id.into(), image, mask));
        Ok(())
    }
}

impl SampleSource for InMemorySamples {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn id(&self, index: usize) -> &str {
        &self.items[index].0
    }

    fn load(&self, index: usize) -> Result<(RasterImage, RasterImage)> {
        let (_, img, mask) = &self.items[index];
        Ok((img.clone(), mask.clone()))
    }
}

/// Manifest records read from disk and passed through CLAHE and resizing.
#[derive(Debug, Clone)]
pub struct ManifestSamples {
    records: Vec<SampleRecord>,
    preprocess: PreprocessSettings,
}

impl ManifestSamples {
    pub fn new(records: &[SampleRecord], preprocess: PreprocessSettings) -> Self {
        ManifestSamples {
            records: records.to_vec(),
            preprocess,
        }
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }
}

impl SampleSource for ManifestSamples {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn id(&self, index: usize) -> &str {
        &self.records[index].id
    }

    fn load(&self, index: usize) -> Result<(RasterImage, RasterImage)> {
        let r = &self.records[index];
        let img = read_rgb(&r.image_path)?;
        let mask = read_mask(&r.mask_path)?;
        let (img, mask) = self.preprocess.apply(&img, Some(&mask))?;
        Ok((img, mask.expect("mask was supplied")))
    }
}
