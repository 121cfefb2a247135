//! Synthetic fundus-like images with lesion masks, for tests and smoke runs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::layout::{images_dir, masks_dir};
use crate::dataset::lesion::LesionClass;
use crate::error::Result;
use crate::imaging::io::{write_image, write_mask};
use crate::imaging::RasterImage;

/// One generated sample: an RGB photograph and a binary mask per lesion class
/// (indexed by [`LesionClass::index`]).
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub image: RasterImage,
    pub masks: [RasterImage; 4],
}

struct Blob {
    cy: f64,
    cx: f64,
    radius: f64,
}

fn lesion_style(lesion: LesionClass) -> ([f64; 3], (f64, f64), (usize, usize)) {
    // color, radius range as a fraction of the side, blob count range
    match lesion {
        LesionClass::EX => ([235.0, 205.0, 80.0], (0.02, 0.045), (2, 5)),
        LesionClass::HE => ([70.0, 12.0, 10.0], (0.03, 0.06), (1, 3)),
        LesionClass::MA => ([95.0, 20.0, 25.0], (0.012, 0.02), (2, 6)),
        LesionClass::SE => ([225.0, 190.0, 165.0], (0.05, 0.08), (1, 2)),
    }
}

/// Renders a dark-surround fundus disk with a vignette and lesion blobs.
pub fn synthesize(side: usize, seed: u64) -> SyntheticSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = side as f64;
    let center = (s - 1.0) / 2.0;
    let disk_radius = 0.46 * s;

    let mut blobs: Vec<(LesionClass, Blob)> = Vec::new();
    for lesion in LesionClass::ALL {
        let (_, (rmin, rmax), (nmin, nmax)) = lesion_style(lesion);
        let count = rng.random_range(nmin..=nmax);
        for _ in 0..count {
            let radius = (rng.random_range(rmin..rmax) * s).max(1.0);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = rng.random_range(0.0..0.75) * (disk_radius - radius);
            blobs.push((
                lesion,
                Blob {
                    cy: center + dist * angle.sin(),
                    cx: center + dist * angle.cos(),
                    radius,
                },
            ));
        }
    }

    let tint = [rng.random_range(170.0..200.0), rng.random_range(70.0..95.0), rng.random_range(25.0..45.0)];
    let mut masks: [RasterImage; 4] =
        std::array::from_fn(|_| RasterImage::filled(side, side, crate::imaging::ColorSpace::Gray, 0));
    let image = RasterImage::from_fn_rgb(side, side, |y, x| {
        let dy = y as f64 - center;
        let dx = x as f64 - center;
        let r = (dy * dy + dx * dx).sqrt();
        if r > disk_radius {
            // faint background noise, below the default crop threshold
            let n = ((x * 31 + y * 17) % 7) as u8;
            return [n, n / 2, n];
        }
        let vignette = 1.0 - 0.45 * (r / disk_radius).powi(2);
        let mut px = tint.map(|c| c * vignette);
        for (lesion, blob) in &blobs {
            let d = ((y as f64 - blob.cy).powi(2) + (x as f64 - blob.cx).powi(2)).sqrt();
            if d <= blob.radius {
                let (color, _, _) = lesion_style(*lesion);
                px = color.map(|c| c * (0.85 + 0.15 * vignette));
                masks[lesion.index()].pixel_mut(y, x)[0] = 1;
            }
        }
        px.map(|c| c.round().clamp(0.0, 255.0) as u8)
    });
    SyntheticSample { image, masks }
}

/// Writes `count` samples in the dataset layout under `root`, returning their stems.
pub fn write_dataset(root: &Path, count: usize, side: usize, seed: u64) -> Result<Vec<String>> {
    let mut stems = Vec::with_capacity(count);
    for i in 0..count {
        let stem = format!("synth_{i:02}");
        let sample = synthesize(side, seed.wrapping_add(i as u64));
        write_image(&images_dir(root).join(format!("{stem}.png")), &sample.image)?;
        for lesion in LesionClass::ALL {
            write_mask(
                &masks_dir(root, lesion).join(format!("{stem}.png")),
                &sample.masks[lesion.index()],
            )?;
        }
        stems.push(stem);
    }
    Ok(stems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_has_lesions_and_dark_surround() {
        let s = synthesize(64, 5);
        assert_eq!(s.image.dims(), (64, 64));
        for m in &s.masks {
            assert!(m.is_binary());
            assert!(m.count_nonzero() > 0);
        }
        assert!(s.image.pixel(0, 0).iter().all(|&v| v < 15));
        assert_eq!(synthesize(64, 5).image, s.image);
    }
}
