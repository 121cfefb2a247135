//! PNG/JPEG reading and writing.
//!
//! Masks live on disk as single-channel PNGs holding `{0, 255}` and in memory
//! as `{0, 1}`; any non-zero stored value reads back as foreground.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, IoContext, Result};
use crate::imaging::raster::{ColorSpace, RasterImage};

pub(crate) fn to_dynamic(img: &RasterImage) -> DynamicImage {
    let (h, w) = (img.height() as u32, img.width() as u32);
    match img.color_space() {
        ColorSpace::Rgb => DynamicImage::ImageRgb8(
            RgbImage::from_raw(w, h, img.data().to_vec()).expect("buffer size matches dimensions"),
        ),
        ColorSpace::Gray => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, img.data().to_vec()).expect("buffer size matches dimensions"),
        ),
    }
}

pub(crate) fn from_rgb(buf: RgbImage) -> RasterImage {
    let (w, h) = buf.dimensions();
    RasterImage::new(h as usize, w as usize, ColorSpace::Rgb, buf.into_raw()).expect("image buffer is well formed")
}

pub(crate) fn from_gray(buf: GrayImage) -> RasterImage {
    let (w, h) = buf.dimensions();
    RasterImage::new(h as usize, w as usize, ColorSpace::Gray, buf.into_raw()).expect("image buffer is well formed")
}

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).with_path(path)?;
    let reader = reader.with_guessed_format().with_path(path)?;
    reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads any supported image as 8-bit RGB.
pub fn read_rgb(path: &Path) -> Result<RasterImage> {
    Ok(from_rgb(open(path)?.to_rgb8()))
}

/// Reads a mask and maps every non-zero level to `1`.
pub fn read_mask(path: &Path) -> Result<RasterImage> {
    let gray = from_gray(open(path)?.to_luma8());
    let (h, w) = gray.dims();
    let data = gray.into_data().into_iter().map(|v| u8::from(v != 0)).collect();
    RasterImage::new(h, w, ColorSpace::Gray, data)
}

/// Reads a single-channel image without remapping its levels.
pub fn read_gray_raw(path: &Path) -> Result<RasterImage> {
    Ok(from_gray(open(path)?.to_luma8()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).with_path(parent)?;
        }
    }
    Ok(())
}

/// Writes an image; the format follows the file extension.
pub fn write_image(path: &Path, img: &RasterImage) -> Result<()> {
    ensure_parent(path)?;
    to_dynamic(img).save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a `{0, 1}` mask as a `{0, 255}` PNG.
pub fn write_mask(path: &Path, mask: &RasterImage) -> Result<()> {
    if !mask.is_binary() {
        return Err(Error::Contract(format!("refusing to write non-binary mask to {}", path.display())));
    }
    let (h, w) = mask.dims();
    let data = mask.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    write_image(path, &RasterImage::new(h, w, ColorSpace::Gray, data)?)
}
