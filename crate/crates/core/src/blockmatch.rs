//! Overlapping block tiling, per-block Hu features and lexicographic-sort
//! matching.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagekit::{GrayImage, Rect};
use crate::moments::{region_hu, HuVector};
pub use crate::pair::{MatchPair, Point, SourceKind};

/// Hu feature of one square block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockFeature {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub feature: HuVector,
    /// Zero-mass block; its moments are undefined and it never matches.
    pub degenerate: bool,
}

impl BlockFeature {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.size, self.size)
    }
}

/// Parameters of [`lex_match`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexMatchParams {
    /// Quantization step per component, as a multiple of its std-dev.
    pub quantization: f64,
    /// Number of following sorted rows each feature is compared against.
    pub window: usize,
    pub min_shift: f64,
    /// Maximum Euclidean distance between standardized feature vectors.
    pub dist_threshold: f64,
}

/// Top-left corners of every `block_size` block on a `stride` lattice that
/// lies fully inside the image, in row-major order.
pub fn tile(img: &GrayImage, block_size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    let (w, h) = (img.width(), img.height());
    if block_size == 0 || block_size > w.min(h) {
        return Err(Error::invalid(format!(
            "block size {block_size} does not fit a {w}x{h} image"
        )));
    }
    if stride == 0 || stride > block_size {
        return Err(Error::invalid(format!(
            "stride {stride} must lie in 1..={block_size}"
        )));
    }
    let ys = (0..=h - block_size).step_by(stride);
    Ok(ys
        .flat_map(|y| (0..=w - block_size).step_by(stride).map(move |x| (x, y)))
        .collect())
}

/// Hu features for every block position, in input order. Zero-mass blocks
/// are kept but flagged `degenerate`.
pub fn extract_block_features(
    img: &GrayImage,
    positions: &[(usize, usize)],
    block_size: usize,
) -> Vec<BlockFeature> {
    positions
        .par_iter()
        .map(|&(x, y)| {
            let hu = region_hu(img, Rect::new(x, y, block_size, block_size));
            match hu {
                Ok(feature) if feature.is_finite() => BlockFeature {
                    x,
                    y,
                    size: block_size,
                    feature,
                    degenerate: false,
                },
                _ => BlockFeature {
                    x,
                    y,
                    size: block_size,
                    feature: HuVector::default(),
                    degenerate: true,
                },
            }
        })
        .collect()
}

/// Per-component population std-dev of the features; zero spreads map to 1.
pub fn component_scales(features: &[&BlockFeature]) -> [f64; 7] {
    let n = features.len() as f64;
    let mut scales = [1.0; 7];
    if features.is_empty() {
        return scales;
    }
    for (k, scale) in scales.iter_mut().enumerate() {
        let mean = features.iter().map(|f| f.feature.0[k]).sum::<f64>() / n;
        let var = features
            .iter()
            .map(|f| (f.feature.0[k] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            *scale = sd;
        }
    }
    scales
}

struct SortRow {
    key: [i64; 7],
    standardized: [f64; 7],
    index: usize,
}

/// Sort order used by [`lex_match`] over the non-degenerate features:
/// quantized key, then standardized value, then position. Returns indices
/// into `features`.
pub fn lex_order(features: &[BlockFeature], quantization: f64) -> Vec<usize> {
    sorted_rows(features, quantization)
        .into_iter()
        .map(|r| r.index)
        .collect()
}

fn sorted_rows(features: &[BlockFeature], quantization: f64) -> Vec<SortRow> {
    let live: Vec<(usize, &BlockFeature)> = features
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.degenerate)
        .collect();
    let refs: Vec<&BlockFeature> = live.iter().map(|(_, f)| *f).collect();
    let scales = component_scales(&refs);
    let mut rows: Vec<SortRow> = live
        .iter()
        .map(|&(index, f)| {
            let standardized: [f64; 7] = std::array::from_fn(|k| f.feature.0[k] / scales[k]);
            let key = std::array::from_fn(|k| (standardized[k] / quantization).floor() as i64);
            SortRow {
                key,
                standardized,
                index,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.key
            .cmp(&b.key)
            .then_with(|| {
                a.standardized
                    .iter()
                    .zip(&b.standardized)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| {
                let (fa, fb) = (&features[a.index], &features[b.index]);
                (fa.y, fa.x).cmp(&(fb.y, fb.x))
            })
    });
    rows
}

fn euclid(a: &[f64; 7], b: &[f64; 7]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Finds similar, spatially separated blocks by sorting quantized
/// standardized features and comparing each row with the next `window` rows.
pub fn lex_match(features: &[BlockFeature], params: &LexMatchParams) -> Vec<MatchPair> {
    let rows = sorted_rows(features, params.quantization);
    if rows.len() < 2 {
        return Vec::new();
    }
    let mut pairs = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let a = &features[row.index];
        for other in rows.iter().skip(i + 1).take(params.window) {
            let b = &features[other.index];
            let (dx, dy) = (b.x as f64 - a.x as f64, b.y as f64 - a.y as f64);
            if dx.hypot(dy) < params.min_shift || (dx == 0.0 && dy == 0.0) {
                continue;
            }
            let dist = euclid(&row.standardized, &other.standardized);
            if dist <= params.dist_threshold {
                pairs.push(MatchPair::canonical(
                    Point::new(a.x as f64, a.y as f64),
                    Point::new(b.x as f64, b.y as f64),
                    dist,
                    SourceKind::Block,
                    a.size as f64,
                    b.size as f64,
                    0.0,
                ));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut s = seed;
        GrayImage::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            0.05 + 0.9 * ((s >> 33) as f64 / (1u64 << 31) as f64)
        })
        .unwrap()
    }

    const PARAMS: LexMatchParams = LexMatchParams {
        quantization: 0.1,
        window: 8,
        min_shift: 16.0,
        dist_threshold: 0.3,
    };

    #[test]
    fn tile_counts() {
        let img = GrayImage::filled(16, 16, 0.5).unwrap();
        assert_eq!(tile(&img, 16, 1).unwrap(), vec![(0, 0)]);
        let img = GrayImage::filled(512, 512, 0.5).unwrap();
        assert_eq!(tile(&img, 16, 1).unwrap().len(), 497 * 497);
        let img = GrayImage::filled(10, 10, 0.5).unwrap();
        assert_eq!(tile(&img, 8, 2).unwrap(), vec![(0, 0), (2, 0), (0, 2), (2, 2)]);
        assert!(tile(&img, 11, 1).is_err());
        assert!(tile(&img, 4, 5).is_err());
        assert!(tile(&img, 4, 0).is_err());
    }

    #[test]
    fn identical_patches_have_identical_features() {
        let src = noise(16, 16, 3);
        let mut img = noise(140, 140, 9);
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, src.get(x, y));
                img.set(100 + x, 100 + y, src.get(x, y));
            }
        }
        let feats = extract_block_features(&img, &[(0, 0), (100, 100)], 16);
        for k in 0..7 {
            assert!((feats[0].feature.0[k] - feats[1].feature.0[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn black_image_has_no_matchable_blocks() {
        let img = GrayImage::filled(32, 32, 0.0).unwrap();
        let pos = tile(&img, 8, 4).unwrap();
        let feats = extract_block_features(&img, &pos, 8);
        assert!(feats.iter().all(|f| f.degenerate));
        assert!(lex_order(&feats, 0.1).is_empty());
        assert!(lex_match(&feats, &PARAMS).is_empty());
    }

    #[test]
    fn flat_image_pairs_identical_blocks() {
        let img = GrayImage::filled(64, 64, 0.4).unwrap();
        let pos = tile(&img, 8, 4).unwrap();
        let feats = extract_block_features(&img, &pos, 8);
        let first = feats[0].feature;
        assert!(feats.iter().all(|f| f.feature == first));
        let pairs = lex_match(&feats, &PARAMS);
        assert!(!pairs.is_empty());
        assert!(pairs.iter().all(|p| p.dist == 0.0 && p.shift_len() >= 16.0));
    }

    #[test]
    fn fewer_than_two_features() {
        let img = noise(16, 16, 1);
        let feats = extract_block_features(&img, &[(0, 0)], 16);
        assert!(lex_match(&feats, &PARAMS).is_empty());
        assert!(lex_match(&[], &PARAMS).is_empty());
    }
}
