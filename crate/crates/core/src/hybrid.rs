//! Evidence fusion: both arms' match pairs are checked against local
//! intensities, grouped by shift vector, and the clusters with enough support
//! are painted into the tamper mask.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::blockmatch::{extract_block_features, lex_match, tile};
use crate::config::DetectorConfig;
use crate::error::{Error, Result};
use crate::imagekit::{dilate, erode, remove_small_components, BinaryMask, GrayImage, Rect};
use crate::keypoints::{build_scale_space, default_octaves, describe, detect_keypoints, match_keypoints};
use crate::pair::{MatchPair, Point, SourceKind};

/// Smallest image `detect` accepts, per side.
pub const MIN_DETECT_SIDE: usize = 32;

/// Which evidence arms feed the fusion stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Block,
    Keypoint,
    Hybrid,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Block, Arm::Keypoint, Arm::Hybrid];

    pub fn name(&self) -> &'static str {
        match self {
            Arm::Block => "block",
            Arm::Keypoint => "keypoint",
            Arm::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        Arm::ALL.into_iter().find(|a| a.name() == s)
    }
}

/// Pairs sharing (approximately) one shift vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftCluster {
    /// Mean canonical shift of the members.
    pub shift: (f64, f64),
    pub members: Vec<MatchPair>,
    pub block_support: usize,
    pub keypoint_support: usize,
}

impl ShiftCluster {
    pub fn support(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub mask: BinaryMask,
    pub tampered: bool,
    /// Accepted clusters, strongest first.
    pub clusters: Vec<ShiftCluster>,
    /// Pairs handed to the fusion stage by both arms.
    pub pairs_examined: usize,
}

/// Maps `s` and `-s` to one representative with `dx > 0`, or `dx = 0` and
/// `dy > 0`.
pub fn canonical_shift(shift: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = shift;
    if dx > 0.0 || (dx == 0.0 && dy > 0.0) {
        (dx, dy)
    } else {
        (-dx, -dy)
    }
}

fn shift_cmp(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.total_cmp(&b.1))
}

struct Building {
    sum: (f64, f64),
    members: Vec<MatchPair>,
    cell: (i64, i64),
}

impl Building {
    fn mean(&self) -> (f64, f64) {
        let n = self.members.len() as f64;
        (self.sum.0 / n, self.sum.1 / n)
    }
}

/// Greedy shift clustering. Pairs are visited in canonical-shift order; each
/// joins the nearest cluster whose running-mean shift lies within
/// `tolerance` (L∞), or founds a new one. Output is sorted by descending
/// support, then shift magnitude, then shift.
pub fn cluster_shifts(pairs: &[MatchPair], tolerance: f64) -> Vec<ShiftCluster> {
    let mut order: Vec<(usize, (f64, f64))> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (i, canonical_shift(p.shift)))
        .collect();
    order.sort_by(|a, b| {
        shift_cmp(a.1, b.1)
            .then_with(|| pairs[a.0].src.lex_cmp(&pairs[b.0].src))
            .then_with(|| pairs[a.0].dst.lex_cmp(&pairs[b.0].dst))
            .then(a.0.cmp(&b.0))
    });

    let cell_size = tolerance.max(1.0);
    let cell_of = |s: (f64, f64)| ((s.0 / cell_size).floor() as i64, (s.1 / cell_size).floor() as i64);
    let mut clusters: Vec<Building> = Vec::new();
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();

    for (i, shift) in order {
        let (cx, cy) = cell_of(shift);
        let mut best: Option<(usize, f64)> = None;
        for gx in cx - 1..=cx + 1 {
            for gy in cy - 1..=cy + 1 {
                let Some(ids) = grid.get(&(gx, gy)) else { continue };
                for &id in ids {
                    let m = clusters[id].mean();
                    let d = (m.0 - shift.0).abs().max((m.1 - shift.1).abs());
                    if d <= tolerance && best.map_or(true, |(bid, bd)| d < bd || (d == bd && id < bid)) {
                        best = Some((id, d));
                    }
                }
            }
        }
        match best {
            Some((id, _)) => {
                let c = &mut clusters[id];
                c.sum.0 += shift.0;
                c.sum.1 += shift.1;
                c.members.push(pairs[i]);
                let new_cell = cell_of(c.mean());
                if new_cell != c.cell {
                    let old = c.cell;
                    c.cell = new_cell;
                    if let Some(v) = grid.get_mut(&old) {
                        v.retain(|x| *x != id);
                    }
                    let v = grid.entry(new_cell).or_default();
                    let pos = v.partition_point(|x| *x < id);
                    v.insert(pos, id);
                }
            }
            None => {
                let id = clusters.len();
                clusters.push(Building {
                    sum: shift,
                    members: vec![pairs[i]],
                    cell: (cx, cy),
                });
                grid.entry((cx, cy)).or_default().push(id);
            }
        }
    }

    let mut out: Vec<ShiftCluster> = clusters
        .into_iter()
        .map(|c| {
            let block_support = c.members.iter().filter(|m| m.source_kind == SourceKind::Block).count();
            ShiftCluster {
                shift: c.mean(),
                keypoint_support: c.members.len() - block_support,
                block_support,
                members: c.members,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.support()
            .cmp(&a.support())
            .then_with(|| {
                let ma = a.shift.0.hypot(a.shift.1);
                let mb = b.shift.0.hypot(b.shift.1);
                ma.total_cmp(&mb)
            })
            .then_with(|| shift_cmp(a.shift, b.shift))
    });
    out
}

/// Samples a `patch × patch` neighborhood around `center`; offsets are
/// rotated by `rotation` and scaled by `scale` first.
fn sample_patch(img: &GrayImage, center: Point, patch: usize, rotation: f64, scale: f64, out: &mut Vec<f64>) {
    out.clear();
    let half = (patch / 2) as f64;
    let (sin, cos) = rotation.sin_cos();
    let exact = rotation == 0.0 && scale == 1.0 && center.x.fract() == 0.0 && center.y.fract() == 0.0;
    for j in 0..patch {
        for i in 0..patch {
            let (ox, oy) = (i as f64 - half, j as f64 - half);
            if exact {
                out.push(img.get_clamped((center.x + ox) as isize, (center.y + oy) as isize));
            } else {
                let rx = (cos * ox - sin * oy) * scale;
                let ry = (sin * ox + cos * oy) * scale;
                out.push(img.sample_bilinear(center.x + rx, center.y + ry));
            }
        }
    }
}

const FLAT_VARIANCE: f64 = 1e-12;
const FLAT_LEVEL_TOLERANCE: f64 = 1e-6;

/// Zero-normalized cross-correlation of two equal-length samples, or `None`
/// when either has (numerically) zero variance.
pub fn zncc(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= FLAT_VARIANCE || sbb <= FLAT_VARIANCE {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn keep_pair(img: &GrayImage, pair: &MatchPair, patch: usize, min_corr: f64, bufs: &mut (Vec<f64>, Vec<f64>)) -> bool {
    let scale = if pair.extent > 0.0 { pair.dst_extent / pair.extent } else { 1.0 };
    let scale = if pair.source_kind == SourceKind::Block { 1.0 } else { scale };
    sample_patch(img, pair.src_anchor(), patch, 0.0, 1.0, &mut bufs.0);
    sample_patch(img, pair.dst_anchor(), patch, pair.rotation, scale, &mut bufs.1);
    match zncc(&bufs.0, &bufs.1) {
        Some(c) => c >= min_corr,
        None => {
            let n = bufs.0.len() as f64;
            let flat = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / n;
                (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() <= FLAT_VARIANCE)
            };
            let (ma, fa) = flat(&bufs.0);
            let (mb, fb) = flat(&bufs.1);
            fa && fb && (ma - mb).abs() <= FLAT_LEVEL_TOLERANCE
        }
    }
}

/// Keeps pairs whose neighborhoods correlate with ZNCC ≥ `min_corr`.
/// Keypoint pairs compare the destination neighborhood in the source frame
/// (undoing the pair's rotation and scale). Pairs involving a constant
/// neighborhood survive only when both are constant at the same level.
pub fn intensity_filter(pairs: &[MatchPair], img: &GrayImage, patch: usize, min_corr: f64) -> Vec<MatchPair> {
    let keep: Vec<bool> = pairs
        .par_iter()
        .map_init(
            || (Vec::with_capacity(patch * patch), Vec::with_capacity(patch * patch)),
            |bufs, p| keep_pair(img, p, patch, min_corr, bufs),
        )
        .collect();
    pairs
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

fn cluster_accepted(c: &ShiftCluster, cfg: &DetectorConfig) -> bool {
    c.block_support >= cfg.t_block
        || c.keypoint_support >= cfg.t_kp
        || (c.support() >= cfg.t_mix && c.block_support >= 1 && c.keypoint_support >= 1)
}

/// Source-side and destination-side footprints of a cluster's members:
/// block squares for block pairs, disks of radius `2σ` around rounded
/// keypoint centers for keypoint pairs.
pub fn paint_cluster(cluster: &ShiftCluster, width: usize, height: usize) -> (BinaryMask, BinaryMask) {
    let mut src = BinaryMask::new(width, height);
    let mut dst = BinaryMask::new(width, height);
    for m in &cluster.members {
        match m.source_kind {
            SourceKind::Block => {
                let side = m.extent as usize;
                src.fill_rect(Rect::new(m.src.x as usize, m.src.y as usize, side, side));
                dst.fill_rect(Rect::new(m.dst.x as usize, m.dst.y as usize, side, side));
            }
            SourceKind::Keypoint => {
                src.fill_disk(m.src.x.round(), m.src.y.round(), 2.0 * m.extent);
                dst.fill_disk(m.dst.x.round(), m.dst.y.round(), 2.0 * m.dst_extent);
            }
        }
    }
    (src, dst)
}

/// Filters both pair sets, clusters the survivors, accepts clusters with
/// enough per-arm or cross-arm support and paints the cleaned-up mask.
pub fn fuse_and_mask(
    block_pairs: &[MatchPair],
    keypoint_pairs: &[MatchPair],
    img: &GrayImage,
    cfg: &DetectorConfig,
) -> DetectionResult {
    let (w, h) = (img.width(), img.height());
    let mut survivors = intensity_filter(block_pairs, img, cfg.patch, cfg.min_corr);
    survivors.extend(intensity_filter(keypoint_pairs, img, cfg.patch, cfg.min_corr));

    let clusters: Vec<ShiftCluster> = cluster_shifts(&survivors, cfg.cluster_tolerance)
        .into_iter()
        .filter(|c| cluster_accepted(c, cfg))
        .collect();

    let mut mask = BinaryMask::new(w, h);
    for c in &clusters {
        let (src, dst) = paint_cluster(c, w, h);
        mask = mask.union(&src).and_then(|m| m.union(&dst)).expect("masks share image size");
    }
    let closed = erode(&dilate(&mask, cfg.close_radius), cfg.close_radius);
    let mask = remove_small_components(&closed, cfg.min_area);
    let tampered = !mask.is_empty();
    DetectionResult {
        mask,
        tampered,
        clusters,
        pairs_examined: block_pairs.len() + keypoint_pairs.len(),
    }
}

/// Raw match pairs from both arms, before filtering.
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    pub block_pairs: Vec<MatchPair>,
    pub keypoint_pairs: Vec<MatchPair>,
    pub keypoint_count: usize,
}

impl Evidence {
    /// Fuses only the pairs the chosen arm contributes.
    pub fn fuse(&self, img: &GrayImage, cfg: &DetectorConfig, arm: Arm) -> DetectionResult {
        let none: &[MatchPair] = &[];
        let (b, k) = match arm {
            Arm::Block => (self.block_pairs.as_slice(), none),
            Arm::Keypoint => (none, self.keypoint_pairs.as_slice()),
            Arm::Hybrid => (self.block_pairs.as_slice(), self.keypoint_pairs.as_slice()),
        };
        fuse_and_mask(b, k, img, cfg)
    }
}

pub fn block_arm(img: &GrayImage, cfg: &DetectorConfig) -> Result<Vec<MatchPair>> {
    let positions = tile(img, cfg.block_size, cfg.stride)?;
    let features = extract_block_features(img, &positions, cfg.block_size);
    Ok(lex_match(&features, &cfg.lex_params()))
}

/// Returns the keypoint pairs and the number of described keypoints.
pub fn keypoint_arm(img: &GrayImage, cfg: &DetectorConfig) -> Result<(Vec<MatchPair>, usize)> {
    let octaves = if cfg.octaves == 0 {
        default_octaves(img.width(), img.height())
    } else {
        cfg.octaves
    };
    let ss = build_scale_space(img, octaves, cfg.scales_per_octave, cfg.sigma0)?;
    let kps = describe(&ss, &detect_keypoints(&ss, cfg.contrast_threshold, cfg.edge_ratio));
    Ok((match_keypoints(&kps, cfg.match_ratio, cfg.kp_min_shift), kps.len()))
}

fn check_size(img: &GrayImage) -> Result<()> {
    if img.width() < MIN_DETECT_SIDE || img.height() < MIN_DETECT_SIDE {
        return Err(Error::invalid(format!(
            "detection needs at least {MIN_DETECT_SIDE}x{MIN_DETECT_SIDE} pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Runs both arms concurrently.
pub fn collect_evidence(img: &GrayImage, cfg: &DetectorConfig) -> Result<Evidence> {
    check_size(img)?;
    cfg.validate()?;
    let (blocks, keypoints) = rayon::join(|| block_arm(img, cfg), || keypoint_arm(img, cfg));
    let (keypoint_pairs, keypoint_count) = keypoints?;
    Ok(Evidence {
        block_pairs: blocks?,
        keypoint_pairs,
        keypoint_count,
    })
}

/// The full pipeline: block arm, keypoint arm, fusion and mask cleanup.
pub fn detect(img: &GrayImage, cfg: &DetectorConfig) -> Result<DetectionResult> {
    Ok(collect_evidence(img, cfg)?.fuse(img, cfg, Arm::Hybrid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(sx: f64, sy: f64, dx: f64, dy: f64, kind: SourceKind) -> MatchPair {
        MatchPair::canonical(Point::new(sx, sy), Point::new(sx + dx, sy + dy), 0.0, kind, 16.0, 16.0, 0.0)
    }

    #[test]
    fn identical_shifts_form_one_cluster() {
        let pairs: Vec<_> = (0..10).map(|i| pair(i as f64 * 3.0, 5.0, 40.0, 60.0, SourceKind::Block)).collect();
        let c = cluster_shifts(&pairs, 4.0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].support(), 10);
        assert_eq!(c[0].shift, (40.0, 60.0));
    }

    #[test]
    fn reflected_shifts_merge() {
        let mut pairs: Vec<_> = (0..5).map(|i| pair(i as f64, 100.0, 40.0, 60.0, SourceKind::Block)).collect();
        // Build raw pairs whose stored shift is the reflection.
        for i in 0..5 {
            let mut p = pair(200.0 + i as f64, 300.0, 40.0, 60.0, SourceKind::Block);
            std::mem::swap(&mut p.src, &mut p.dst);
            p.shift = (-40.0, -60.0);
            pairs.push(p);
        }
        let c = cluster_shifts(&pairs, 4.0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].support(), 10);
    }

    #[test]
    fn distant_shifts_stay_apart() {
        let mut pairs: Vec<_> = (0..3).map(|i| pair(i as f64, 0.0, 40.0, 60.0, SourceKind::Block)).collect();
        pairs.extend((0..5).map(|i| pair(i as f64, 0.0, 200.0, 10.0, SourceKind::Keypoint)));
        let c = cluster_shifts(&pairs, 4.0);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].support(), c[0].keypoint_support), (5, 5));
        assert_eq!((c[1].support(), c[1].block_support), (3, 3));
    }

    #[test]
    fn canonical_half_plane() {
        assert_eq!(canonical_shift((-3.0, 4.0)), (3.0, -4.0));
        assert_eq!(canonical_shift((0.0, -2.0)), (0.0, 2.0));
        assert_eq!(canonical_shift((1.0, -2.0)), (1.0, -2.0));
    }

    #[test]
    fn flat_patches() {
        let mut img = GrayImage::filled(64, 32, 0.2).unwrap();
        for y in 0..32 {
            for x in 32..64 {
                img.set(x, y, 0.8);
            }
        }
        let same = pair(2.0, 2.0, 8.0, 0.0, SourceKind::Block);
        let diff = pair(2.0, 2.0, 40.0, 0.0, SourceKind::Block);
        let kept = intensity_filter(&[same, diff], &img, 9, 0.7);
        assert_eq!(kept, vec![same]);
    }

    #[test]
    fn zncc_self_is_one() {
        let a: Vec<f64> = (0..81).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        assert!((zncc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(zncc(&a, &vec![0.5; 81]).is_none());
    }

    #[test]
    fn no_evidence_no_verdict() {
        let img = GrayImage::filled(64, 64, 0.5).unwrap();
        let r = fuse_and_mask(&[], &[], &img, &DetectorConfig::default());
        assert!(!r.tampered);
        assert!(r.mask.is_empty());
        assert!(r.clusters.is_empty());
    }

    #[test]
    fn undersized_image_rejected() {
        let img = GrayImage::filled(31, 64, 0.5).unwrap();
        assert!(detect(&img, &DetectorConfig::default()).is_err());
    }
}
