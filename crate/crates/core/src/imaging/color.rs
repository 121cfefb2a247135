//! sRGB <-> CIE L*a*b* conversion under the D65 white point.
//!
//! The transfer is the standard chain: sRGB companding, linear RGB -> XYZ with
//! the sRGB primaries, then the CIE 1976 L*a*b* mapping normalized to D65
//! (Xn = 0.95047, Yn = 1.0, Zn = 1.08883). Lightness is clamped to [0, 100].

use crate::error::{Error, Result};
use crate::imaging::raster::{ColorSpace, RasterImage};

const WHITE_X: f64 = 0.950_47;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.088_83;

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

// delta = 6/29
const DELTA: f64 = 6.0 / 29.0;

/// Planar L*a*b* image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    height: usize,
    width: usize,
    l: Vec<f32>,
    a: Vec<f32>,
    b: Vec<f32>,
}

impl LabImage {
    pub fn from_channels(height: usize, width: usize, l: Vec<f32>, a: Vec<f32>, b: Vec<f32>) -> Result<Self> {
        let n = height * width;
        if l.len() != n || a.len() != n || b.len() != n {
            return Err(Error::Contract(format!(
                "LAB channels must each hold {n} values (got {}, {}, {})",
                l.len(),
                a.len(),
                b.len()
            )));
        }
        if l.iter().any(|v| !(0.0..=100.0).contains(v)) {
            return Err(Error::Contract("L channel values must lie in [0, 100]".into()));
        }
        Ok(LabImage { height, width, l, a, b })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn l(&self) -> &[f32] {
        &self.l
    }

    pub fn a(&self) -> &[f32] {
        &self.a
    }

    pub fn b(&self) -> &[f32] {
        &self.b
    }

    /// Swaps in a new lightness channel, keeping A and B untouched.
    pub fn with_lightness(mut self, l: Vec<f32>) -> Result<Self> {
        if l.len() != self.l.len() {
            return Err(Error::Contract("replacement L channel has the wrong size".into()));
        }
        self.l = l.into_iter().map(|v| v.clamp(0.0, 100.0)).collect();
        Ok(self)
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

/// Converts one 8-bit sRGB triple to `(L, a, b)`.
pub fn rgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(|v| srgb_to_linear(v as f64 / 255.0));
    let xyz: [f64; 3] = std::array::from_fn(|r| {
        RGB_TO_XYZ[r][0] * lin[0] + RGB_TO_XYZ[r][1] * lin[1] + RGB_TO_XYZ[r][2] * lin[2]
    });
    let fx = lab_f(xyz[0] / WHITE_X);
    let fy = lab_f(xyz[1] / WHITE_Y);
    let fz = lab_f(xyz[2] / WHITE_Z);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts `(L, a, b)` back to 8-bit sRGB, clipping out-of-gamut values.
pub fn lab_pixel_to_rgb(lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        WHITE_X * lab_f_inv(fx),
        WHITE_Y * lab_f_inv(fy),
        WHITE_Z * lab_f_inv(fz),
    ];
    std::array::from_fn(|r| {
        let lin = XYZ_TO_RGB[r][0] * xyz[0] + XYZ_TO_RGB[r][1] * xyz[1] + XYZ_TO_RGB[r][2] * xyz[2];
        let c = linear_to_srgb(lin.clamp(0.0, 1.0));
        (c * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

pub fn rgb_to_lab(img: &RasterImage) -> Result<LabImage> {
    img.require_rgb()?;
    let n = img.height() * img.width();
    let (mut l, mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in img.data().chunks_exact(3) {
        let lab = rgb_pixel_to_lab([px[0], px[1], px[2]]);
        l.push(lab[0] as f32);
        a.push(lab[1] as f32);
        b.push(lab[2] as f32);
    }
    Ok(LabImage {
        height: img.height(),
        width: img.width(),
        l,
        a,
        b,
    })
}

pub fn lab_to_rgb(lab: &LabImage) -> RasterImage {
    let mut data = Vec::with_capacity(lab.l.len() * 3);
    for i in 0..lab.l.len() {
        data.extend_from_slice(&lab_pixel_to_rgb([lab.l[i] as f64, lab.a[i] as f64, lab.b[i] as f64]));
    }
    RasterImage::new(lab.height, lab.width, ColorSpace::Rgb, data).expect("LAB image has consistent dimensions")
}
