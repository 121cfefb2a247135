//! Reference implementations used as test oracles. They are written from the
//! textbook definitions, deliberately without sharing code with the crate.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Straightforward CLAHE on 8-bit levels for images whose sides divide evenly
/// into the tile grid.
///
/// Each tile's histogram is clipped at `clip * pixels / 256`, the clipped mass
/// is spread evenly over all 256 bins, and a level maps to the tile's
/// midpoint rank `(mass below + mass at / 2) * 256 / pixels - 0.5`. Each
/// output pixel blends the four nearest tile mappings bilinearly by its
/// distance to the tile centers; beyond the outermost centers the nearest
/// mapping is used.
pub fn reference_clahe(data: &[u8], h: usize, w: usize, clip: f64, tiles: (usize, usize)) -> Vec<u8> {
    let (tr, tc) = tiles;
    assert!(h.is_multiple_of(tr) && w.is_multiple_of(tc), "oracle needs an even tile grid");
    let (th, tw) = (h / tr, w / tc);
    let pixels = (th * tw) as f64;

    // maps[t][v] for tile t = row * tc + col
    let mut maps = vec![[0.0f64; 256]; tr * tc];
    for r in 0..tr {
        for c in 0..tc {
            let mut hist = [0.0f64; 256];
            for y in r * th..(r + 1) * th {
                for x in c * tw..(c + 1) * tw {
                    hist[data[y * w + x] as usize] += 1.0;
                }
            }
            let limit = clip * pixels / 256.0;
            let mut excess = 0.0;
            for b in hist.iter_mut() {
                if *b > limit {
                    excess += *b - limit;
                    *b = limit;
                }
            }
            for b in hist.iter_mut() {
                *b += excess / 256.0;
            }
            let mut below = 0.0;
            for v in 0..256 {
                let m = (below + hist[v] / 2.0) * 256.0 / pixels - 0.5;
                maps[r * tc + c][v] = m.clamp(0.0, 255.0);
                below += hist[v];
            }
        }
    }

    // position in tile-center units, clamped to the outermost centers
    let coord = |p: usize, size: usize, count: usize| -> (usize, usize, f64) {
        let f = (p as f64 + 0.5) / size as f64 - 0.5;
        if f <= 0.0 {
            return (0, 0, 0.0);
        }
        if f >= (count - 1) as f64 {
            return (count - 1, count - 1, 0.0);
        }
        let i = f.floor() as usize;
        (i, i + 1, f - i as f64)
    };

    let mut out = vec![0u8; h * w];
    for y in 0..h {
        let (r0, r1, fy) = coord(y, th, tr);
        for x in 0..w {
            let (c0, c1, fx) = coord(x, tw, tc);
            let v = data[y * w + x] as usize;
            let m = |r: usize, c: usize| maps[r * tc + c][v];
            let top = m(r0, c0) + (m(r0, c1) - m(r0, c0)) * fx;
            let bottom = m(r1, c0) + (m(r1, c1) - m(r1, c0)) * fx;
            let value = top + (bottom - top) * fy;
            out[y * w + x] = value.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Bounding box `(top, left, height, width)` of the set pixels in a boolean
/// grid, by visiting every pixel.
pub fn scan_bbox(set: &[bool], h: usize, w: usize) -> Option<(usize, usize, usize, usize)> {
    let mut found = None::<(usize, usize, usize, usize)>;
    for y in 0..h {
        for x in 0..w {
            if set[y * w + x] {
                found = Some(match found {
                    None => (y, x, y, x),
                    Some((t, l, b, r)) => (t.min(y), l.min(x), b.max(y), r.max(x)),
                });
            }
        }
    }
    found.map(|(t, l, b, r)| (t, l, b - t + 1, r - l + 1))
}

/// Metrics by enumerating pixels and applying the textbook formulas. F1 is the
/// set overlap `2|A∩B| / (|A| + |B|)`; `f1_harmonic` is the harmonic mean of
/// precision and recall where both exist.
#[derive(Debug, Clone, Copy)]
pub struct BruteMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub accuracy: f64,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub f1_harmonic: Option<f64>,
    pub iou: Option<f64>,
}

pub fn brute_metrics(pred: &[u8], truth: &[u8]) -> BruteMetrics {
    let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let div = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
    let precision = div(tp, tp + fp);
    let sensitivity = div(tp, tp + fn_);
    let f1_harmonic = match (precision, sensitivity) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    // overlap over union of the two foreground sets
    let overlap = pred.iter().zip(truth).filter(|(&p, &t)| p == 1 && t == 1).count() as u64;
    let union = pred.iter().zip(truth).filter(|(&p, &t)| p == 1 || t == 1).count() as u64;
    let sizes = pred.iter().chain(truth).filter(|&&v| v == 1).count() as u64;
    BruteMetrics {
        tp,
        tn,
        fp,
        fn_,
        accuracy: (tp + tn) as f64 / pred.len() as f64,
        specificity: div(tn, tn + fp),
        sensitivity,
        precision,
        f1: div(2 * overlap, sizes),
        f1_harmonic,
        iou: div(overlap, union),
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by visiting every pair.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Mean binary cross-entropy straight from the formula.
pub fn reference_bce(pred: &[f64], target: &[f64]) -> f64 {
    let eps = 1e-7;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.max(eps).min(1.0 - eps);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    -sum / pred.len() as f64
}

pub fn random_mask(rng: &mut impl Rng, n: usize, density: f64) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.random_bool(density))).collect()
}
