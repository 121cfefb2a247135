//! Paired rotation/flip augmentation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::manifest::{Provenance, SampleRecord, SplitManifest};
use crate::error::{Error, Result};
use crate::imaging::geometry::{flip_horizontal, rotate, Interpolation};
use crate::imaging::io::{read_mask, read_rgb, write_image, write_mask};
use crate::imaging::RasterImage;

/// Maximum absolute rotation, in degrees.
pub const MAX_ROTATION_DEG: f64 = 10.0;
/// Probability of a horizontal mirror.
pub const FLIP_PROBABILITY: f64 = 0.5;
/// Augmented samples generated per training original.
pub const DEFAULT_PER_IMAGE: usize = 9;

/// One geometric transform: rotate about the center, then optionally mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentTransform {
    pub angle_deg: f64,
    pub flip: bool,
}

impl AugmentTransform {
    pub const IDENTITY: AugmentTransform = AugmentTransform {
        angle_deg: 0.0,
        flip: false,
    };

    /// Draws an angle uniformly from `[-10, 10]` degrees and a fair-coin flip.
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle_deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        let flip = rng.random_bool(FLIP_PROBABILITY);
        AugmentTransform { angle_deg, flip }
    }

    pub fn apply_image(&self, img: &RasterImage) -> RasterImage {
        let rotated = rotate(img, self.angle_deg, Interpolation::Bilinear);
        if self.flip {
            flip_horizontal(&rotated)
        } else {
            rotated
        }
    }

    pub fn apply_mask(&self, mask: &RasterImage) -> RasterImage {
        let rotated = rotate(mask, self.angle_deg, Interpolation::Nearest);
        if self.flip {
            flip_horizontal(&rotated)
        } else {
            rotated
        }
    }

    /// Applies the identical transform to an image and its mask.
    pub fn apply(&self, img: &RasterImage, mask: &RasterImage) -> Result<(RasterImage, RasterImage)> {
        if !img.same_dims(mask) {
            return Err(Error::Pairing(format!(
                "image is {:?} but mask is {:?}",
                img.dims(),
                mask.dims()
            )));
        }
        Ok((self.apply_image(img), self.apply_mask(mask)))
    }
}

/// Draws a transform from `rng_seed` and applies it to the pair.
pub fn augment_pair(
    img: &RasterImage,
    mask: &RasterImage,
    rng_seed: u64,
) -> Result<(RasterImage, RasterImage, AugmentTransform)> {
    let transform = AugmentTransform::sample(rng_seed);
    let (i, m) = transform.apply(img, mask)?;
    Ok((i, m, transform))
}

/// SplitMix64 finalizer, used to derive independent per-sample seeds.
pub fn mix_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `per_image` augmented copies of every training original into
/// `out_dir/{images,masks}` and returns the manifest with its train split
/// extended. Validation and test are left untouched.
pub fn build_training_set(manifest: &SplitManifest, per_image: usize, out_dir: &Path) -> Result<SplitManifest> {
    let originals: Vec<&SampleRecord> = manifest.originals_in_train().collect();
    if originals.is_empty() {
        return Err(Error::Config("training split is empty; nothing to augment".into()));
    }
    let mut out = manifest.clone();
    out.train.retain(|r| !r.is_augmented());
    for (index, record) in originals.iter().enumerate() {
        let img = read_rgb(&record.image_path)?;
        let mask = read_mask(&record.mask_path)?;
        for k in 0..per_image {
            let seed = mix_seed(manifest.seed, (index * per_image + k) as u64);
            let (aug_img, aug_mask, transform) = augment_pair(&img, &mask, seed)?;
            let id = format!("{}_aug{k}", record.id);
            let image_path = out_dir.join("images").join(format!("{id}.png"));
            let mask_path = out_dir.join("masks").join(format!("{id}.png"));
            write_image(&image_path, &aug_img)?;
            write_mask(&mask_path, &aug_mask)?;
            out.train.push(SampleRecord {
                id,
                image_path,
                mask_path,
                lesion: record.lesion,
                provenance: Provenance::Augmented {
                    parent: record.id.clone(),
                    seed,
                    transform,
                },
            });
        }
    }
    out.validate()?;
    Ok(out)
}
