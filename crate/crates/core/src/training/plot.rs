//! Loss-curve rendering without a plotting dependency: axes, tick marks and
//! one polyline per series on a white canvas.

use std::path::Path;

use crate::error::Result;
use crate::imaging::io::write_image;
use crate::imaging::RasterImage;
use crate::training::trainer::EpochLog;

const WIDTH: usize = 640;
const HEIGHT: usize = 400;
const MARGIN: usize = 40;
pub const TRAIN_COLOR: [u8; 3] = [31, 119, 180];
pub const VAL_COLOR: [u8; 3] = [255, 127, 14];

struct Canvas {
    img: RasterImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < WIDTH && (y as usize) < HEIGHT {
            self.img.pixel_mut(y as usize, x as usize).copy_from_slice(&color);
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            for (ox, oy) in [(0, 0), (1, 0), (0, 1)] {
                self.put(x + ox, y + oy, color);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn rect(&mut self, x: i64, y: i64, w: i64, h: i64, color: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, color);
            }
        }
    }
}

/// Draws train and validation loss per epoch. Legend swatches sit in the top
/// right corner: train first, validation second.
pub fn render_loss_curve(log: &[EpochLog]) -> RasterImage {
    let mut c = Canvas {
        img: RasterImage::filled(HEIGHT, WIDTH, crate::imaging::ColorSpace::Rgb, 255),
    };
    let black = [0, 0, 0];
    let grey = [200, 200, 200];
    let (left, right) = (MARGIN as i64, (WIDTH - MARGIN / 2) as i64);
    let (top, bottom) = ((MARGIN / 2) as i64, (HEIGHT - MARGIN) as i64);
    let y_max = log
        .iter()
        .flat_map(|e| [e.train_loss, e.val_loss])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.05;
    for k in 0..=4 {
        let y = bottom - (bottom - top) * k / 4;
        c.line((left, y), (right, y), grey);
        c.line((left - 5, y), (left, y), black);
    }
    c.line((left, top), (left, bottom), black);
    c.line((left, bottom), (right, bottom), black);
    let n = log.len();
    let x_of = |i: usize| -> i64 {
        if n <= 1 {
            (left + right) / 2
        } else {
            left + ((right - left) as f64 * i as f64 / (n - 1) as f64).round() as i64
        }
    };
    let y_of = |v: f64| -> i64 { bottom - ((bottom - top) as f64 * (v / y_max)).round() as i64 };
    for i in 0..n {
        c.line((x_of(i), bottom), (x_of(i), bottom + 5), black);
    }
    for (series, color) in [(0, TRAIN_COLOR), (1, VAL_COLOR)] {
        let value = |e: &EpochLog| if series == 0 { e.train_loss } else { e.val_loss };
        let points: Vec<(i64, i64)> = log.iter().enumerate().map(|(i, e)| (x_of(i), y_of(value(e)))).collect();
        for w in points.windows(2) {
            c.line(w[0], w[1], color);
        }
        for &(x, y) in &points {
            c.rect(x - 2, y - 2, 5, 5, color);
        }
    }
    c.rect(right - 40, top + 4, 14, 8, TRAIN_COLOR);
    c.rect(right - 20, top + 4, 14, 8, VAL_COLOR);
    c.img
}

pub fn write_loss_curve(path: &Path, log: &[EpochLog]) -> Result<()> {
    write_image(path, &render_loss_curve(log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_both_series() {
        let log: Vec<EpochLog> = (1..=4)
            .map(|e| EpochLog {
                epoch: e,
                train_loss: 1.0 / e as f64,
                val_loss: 1.2 / e as f64,
                wall_time_s: 0.1,
                improved: true,
            })
            .collect();
        let img = render_loss_curve(&log);
        assert_eq!(img.dims(), (HEIGHT, WIDTH));
        let count = |color: [u8; 3]| img.data().chunks_exact(3).filter(|p| *p == color).count();
        assert!(count(TRAIN_COLOR) > 100);
        assert!(count(VAL_COLOR) > 100);
        let empty = render_loss_curve(&[]);
        assert_eq!(empty.dims(), (HEIGHT, WIDTH));
    }
}
