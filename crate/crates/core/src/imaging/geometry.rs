//! Resizing, rotation and mirroring for image/mask pairs.

use image::imageops::{self, FilterType};

use crate::error::{Error, Result};
use crate::imaging::io::{from_gray, from_rgb, to_dynamic};
use crate::imaging::raster::{ColorSpace, RasterImage};

/// Bilinear (triangle-filter) resize of a photograph.
pub fn resize_bilinear(img: &RasterImage, height: usize, width: usize) -> RasterImage {
    if img.dims() == (height, width) {
        return img.clone();
    }
    let dynamic = to_dynamic(img);
    let (w, h) = (width as u32, height as u32);
    match img.color_space() {
        ColorSpace::Rgb => from_rgb(imageops::resize(&dynamic.to_rgb8(), w, h, FilterType::Triangle)),
        ColorSpace::Gray => from_gray(imageops::resize(&dynamic.to_luma8(), w, h, FilterType::Triangle)),
    }
}

/// Nearest-neighbor resize; output pixel `d` samples source `floor((d + 0.5) * in / out)`.
pub fn resize_nearest(img: &RasterImage, height: usize, width: usize) -> RasterImage {
    if img.dims() == (height, width) {
        return img.clone();
    }
    let src_index = |d: usize, out: usize, inp: usize| (((2 * d + 1) * inp) / (2 * out)).min(inp - 1);
    let cols: Vec<usize> = (0..width).map(|x| src_index(x, width, img.width())).collect();
    let c = img.channels();
    let mut data = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let sy = src_index(y, height, img.height());
        for &sx in &cols {
            data.extend_from_slice(img.pixel(sy, sx));
        }
    }
    RasterImage::new(height, width, img.color_space(), data).expect("resize keeps buffer consistent")
}

/// Square-stretches an image (bilinear) and optionally its mask (nearest) to `side x side`.
pub fn resize_pair(
    img: &RasterImage,
    mask: Option<&RasterImage>,
    side: usize,
) -> Result<(RasterImage, Option<RasterImage>)> {
    if side == 0 {
        return Err(Error::Config("resize side must be at least 1".into()));
    }
    if let Some(mask) = mask {
        if !img.same_dims(mask) {
            return Err(Error::Pairing(format!(
                "image is {:?} but mask is {:?}",
                img.dims(),
                mask.dims()
            )));
        }
    }
    Ok((resize_bilinear(img, side, side), mask.map(|m| resize_nearest(m, side, side))))
}

pub fn flip_horizontal(img: &RasterImage) -> RasterImage {
    let (h, w) = img.dims();
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in (0..w).rev() {
            data.extend_from_slice(img.pixel(y, x));
        }
    }
    RasterImage::new(h, w, img.color_space(), data).expect("flip keeps buffer consistent")
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Rotates counter-clockwise by `degrees` about the frame center, filling
/// uncovered pixels with zero.
pub fn rotate(img: &RasterImage, degrees: f64, interpolation: Interpolation) -> RasterImage {
    let (h, w) = img.dims();
    let c = img.channels();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = RasterImage::filled(h, w, img.color_space(), 0);
    for y in 0..h {
        for x in 0..w {
            // Inverse map: rotate the destination offset clockwise into the source.
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let dst = out.pixel_mut(y, x);
            match interpolation {
                Interpolation::Nearest => {
                    let (ny, nx) = (sy.round(), sx.round());
                    if ny >= 0.0 && nx >= 0.0 && (ny as usize) < h && (nx as usize) < w {
                        dst.copy_from_slice(img.pixel(ny as usize, nx as usize));
                    }
                }
                Interpolation::Bilinear => {
                    let (y0, x0) = (sy.floor(), sx.floor());
                    let (ty, tx) = (sy - y0, sx - x0);
                    let mut acc = [0.0f64; 3];
                    for (oy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
                        for (ox, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
                            let weight = wy * wx;
                            if weight == 0.0 {
                                continue;
                            }
                            let (py, px) = (y0 + oy, x0 + ox);
                            if py < 0.0 || px < 0.0 || py as usize >= h || px as usize >= w {
                                continue;
                            }
                            for (ch, v) in img.pixel(py as usize, px as usize).iter().enumerate() {
                                acc[ch] += weight * *v as f64;
                            }
                        }
                    }
                    for ch in 0..c {
                        dst[ch] = acc[ch].round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize() {
        let img = RasterImage::from_fn_rgb(16, 16, |y, x| [(y * 13) as u8, (x * 7) as u8, 3]);
        let mask = RasterImage::from_fn_gray(16, 16, |y, _| u8::from(y > 4));
        let (i, m) = resize_pair(&img, Some(&mask), 16).unwrap();
        assert_eq!(i, img);
        assert_eq!(m.unwrap(), mask);
    }

    #[test]
    fn nearest_halves_a_two_pixel_block() {
        let mask = RasterImage::from_fn_gray(1024, 1024, |y, x| u8::from(y < 2 && x < 2));
        let out = resize_nearest(&mask, 512, 512);
        assert_eq!(out.pixel(0, 0), &[1]);
        assert_eq!(out.count_nonzero(), 1);
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let img = RasterImage::filled(8, 8, ColorSpace::Rgb, 1);
        let mask = RasterImage::filled(8, 9, ColorSpace::Gray, 0);
        assert!(matches!(resize_pair(&img, Some(&mask), 4), Err(Error::Pairing(_))));
        assert!(resize_pair(&img, None, 0).is_err());
    }

    #[test]
    fn bilinear_resize_changes_dims() {
        let img = RasterImage::from_fn_rgb(30, 50, |y, x| [(y * 5) as u8, (x * 5) as u8, 100]);
        let (out, _) = resize_pair(&img, None, 20).unwrap();
        assert_eq!(out.dims(), (20, 20));
    }

    #[test]
    fn zero_rotation_and_double_flip_are_identity() {
        let img = RasterImage::from_fn_rgb(9, 11, |y, x| [(y * 20) as u8, (x * 20) as u8, (x * y) as u8]);
        assert_eq!(rotate(&img, 0.0, Interpolation::Bilinear), img);
        assert_eq!(rotate(&img, 0.0, Interpolation::Nearest), img);
        let flipped = flip_horizontal(&img);
        assert_ne!(flipped, img);
        assert_eq!(flip_horizontal(&flipped), img);
        assert_eq!(flipped.pixel(2, 0), img.pixel(2, 10));
    }

    #[test]
    fn quarter_turn_moves_corners() {
        let img = RasterImage::from_fn_gray(5, 5, |y, x| u8::from(y == 0 && x == 4));
        // Counter-clockwise: the top-right corner ends up top-left.
        let out = rotate(&img, 90.0, Interpolation::Nearest);
        assert_eq!(out.pixel(0, 0), &[1]);
        assert_eq!(out.count_nonzero(), 1);
    }
}
