use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Color layout of a [`RasterImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    Gray,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb => 3,
            ColorSpace::Gray => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::Gray => "GRAY",
        }
    }
}

/// An 8-bit interleaved pixel grid.
///
/// Binary masks are `Gray` images holding only `0` and `1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    color_space: ColorSpace,
    data: Vec<u8>,
}

/// An axis-aligned window inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropRect {
    pub fn full(height: usize, width: usize) -> Self {
        CropRect {
            top: 0,
            left: 0,
            height,
            width,
        }
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn fits_within(&self, height: usize, width: usize) -> bool {
        self.height >= 1 && self.width >= 1 && self.bottom() <= height && self.right() <= width
    }
}

impl RasterImage {
    pub fn new(height: usize, width: usize, color_space: ColorSpace, data: Vec<u8>) -> Result<Self> {
        let expected = height * width * color_space.channels();
        if height == 0 || width == 0 {
            return Err(Error::Contract(format!(
                "image dimensions must be non-zero, got {height}x{width}"
            )));
        }
        if data.len() != expected {
            return Err(Error::Contract(format!(
                "pixel buffer holds {} values, {height}x{width}x{} needs {expected}",
                data.len(),
                color_space.channels()
            )));
        }
        Ok(RasterImage {
            height,
            width,
            color_space,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, color_space: ColorSpace, value: u8) -> Self {
        RasterImage {
            height,
            width,
            color_space,
            data: vec![value; height * width * color_space.channels()],
        }
    }

    pub fn from_fn_rgb(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        RasterImage {
            height,
            width,
            color_space: ColorSpace::Rgb,
            data,
        }
    }

    pub fn from_fn_gray(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        RasterImage {
            height,
            width,
            color_space: ColorSpace::Gray,
            data,
        }
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

    pub fn channels(&self) -> usize {
        self.color_space.channels()
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[u8] {
        let c = self.channels();
        let i = (y * self.width + x) * c;
        &self.data[i..i + c]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [u8] {
        let c = self.channels();
        let i = (y * self.width + x) * c;
        &mut self.data[i..i + c]
    }

    pub fn require_rgb(&self) -> Result<()> {
        match self.color_space {
            ColorSpace::Rgb => Ok(()),
            other => Err(Error::InvalidColorSpace {
                expected: "RGB",
                actual: other.name(),
            }),
        }
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.dims() == other.dims()
    }

    /// Rec. 601 luma, rounded to the nearest integer.
    pub fn to_gray(&self) -> RasterImage {
        match self.color_space {
            ColorSpace::Gray => self.clone(),
            ColorSpace::Rgb => {
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| {
                        let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                        y.round().clamp(0.0, 255.0) as u8
                    })
                    .collect();
                RasterImage {
                    height: self.height,
                    width: self.width,
                    color_space: ColorSpace::Gray,
                    data,
                }
            }
        }
    }

    /// Copies out the window under `rect`.
    pub fn sub_image(&self, rect: &CropRect) -> Result<RasterImage> {
        if !rect.fits_within(self.height, self.width) {
            return Err(Error::Contract(format!(
                "crop {rect:?} does not fit a {}x{} image",
                self.height, self.width
            )));
        }
        let c = self.channels();
        let mut data = Vec::with_capacity(rect.height * rect.width * c);
        for y in rect.top..rect.bottom() {
            let start = (y * self.width + rect.left) * c;
            data.extend_from_slice(&self.data[start..start + rect.width * c]);
        }
        Ok(RasterImage {
            height: rect.height,
            width: rect.width,
            color_space: self.color_space,
            data,
        })
    }

    /// True when every value is `0` or `1`.
    pub fn is_binary(&self) -> bool {
        self.color_space == ColorSpace::Gray && self.data.iter().all(|&v| v <= 1)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Scales intensities into `[0, 1]` as planar (channel-major) values.
    pub fn to_planar_unit(&self) -> Vec<f64> {
        let c = self.channels();
        let hw = self.height * self.width;
        let mut out = vec![0.0; c * hw];
        for (i, px) in self.data.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                out[ch * hw + i] = v as f64 / 255.0;
            }
        }
        out
    }
}
