//! Scale-space keypoints: difference-of-Gaussian extrema, gradient-histogram
//! descriptors and intra-image descriptor matching through a kd-tree.

mod describe;
pub mod kdtree;
mod scale_space;

use std::collections::HashSet;
use std::f64::consts::PI;

use rayon::prelude::*;

pub use describe::{describe, out_of_bounds_reads, DESCRIPTOR_LEN};
pub use kdtree::KdTree;
pub use scale_space::{build_scale_space, default_octaves, gaussian_blur, Octave, Plane, ScaleSpace};

use crate::pair::{MatchPair, Point, SourceKind};

/// Pixels kept clear of the octave border during extremum search.
const DETECT_BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;

/// A detected (and, after [`describe`], oriented and described) keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    /// Base-image coordinates.
    pub x: f64,
    pub y: f64,
    /// Detection scale in base-image pixels.
    pub sigma: f64,
    /// Radians in `[0, 2π)`.
    pub orientation: f64,
    /// 128 non-negative entries with unit norm; empty until described.
    pub descriptor: Vec<f32>,
    pub octave: usize,
    /// Integer DoG level the extremum was found at.
    pub layer: usize,
    /// Refined position in the octave's own pixel grid.
    pub octave_x: f64,
    pub octave_y: f64,
    /// Refined fractional level.
    pub octave_level: f64,
}

/// 3x3x3 neighborhood check: strictly above or strictly below all 26
/// neighbors.
fn is_extremum(dogs: &[Plane], s: usize, x: usize, y: usize) -> bool {
    let v = dogs[s].at(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for plane in &dogs[s - 1..=s + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dogs[s]) && xx == x && yy == y {
                    continue;
                }
                let n = plane.at(xx, yy);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    true
}

struct Refined {
    x: usize,
    y: usize,
    s: usize,
    offset: [f64; 3],
    value: f64,
}

/// Solves the 3x3 system `h · x = b` by Cramer's rule.
fn solve3(h: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(h);
    if d.abs() < 1e-18 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut m = h;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *o = det(m) / d;
    }
    Some(out)
}

/// Quadratic sub-pixel refinement; `None` when the fit wanders off the
/// lattice or does not settle.
fn refine(dogs: &[Plane], mut x: usize, mut y: usize, mut s: usize, spo: usize) -> Option<Refined> {
    let (w, h) = (dogs[0].width, dogs[0].height);
    for _ in 0..MAX_REFINE_STEPS {
        let d = |ds: usize, xx: usize, yy: usize| dogs[ds].at(xx, yy);
        let v = d(s, x, y);
        let g = [
            0.5 * (d(s, x + 1, y) - d(s, x - 1, y)),
            0.5 * (d(s, x, y + 1) - d(s, x, y - 1)),
            0.5 * (d(s + 1, x, y) - d(s - 1, x, y)),
        ];
        let dxx = d(s, x + 1, y) + d(s, x - 1, y) - 2.0 * v;
        let dyy = d(s, x, y + 1) + d(s, x, y - 1) - 2.0 * v;
        let dss = d(s + 1, x, y) + d(s - 1, x, y) - 2.0 * v;
        let dxy = 0.25 * (d(s, x + 1, y + 1) - d(s, x - 1, y + 1) - d(s, x + 1, y - 1) + d(s, x - 1, y - 1));
        let dxs = 0.25 * (d(s + 1, x + 1, y) - d(s + 1, x - 1, y) - d(s - 1, x + 1, y) + d(s - 1, x - 1, y));
        let dys = 0.25 * (d(s + 1, x, y + 1) - d(s + 1, x, y - 1) - d(s - 1, x, y + 1) + d(s - 1, x, y - 1));
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let offset = solve3(hess, [-g[0], -g[1], -g[2]])?;
        if offset.iter().all(|o| o.abs() <= 0.5) {
            let value = v + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
            return Some(Refined { x, y, s, offset, value });
        }
        if offset.iter().any(|o| !o.is_finite() || o.abs() > 1e6) {
            return None;
        }
        let nx = x as f64 + offset[0].round();
        let ny = y as f64 + offset[1].round();
        let ns = s as f64 + offset[2].round();
        let b = DETECT_BORDER as f64;
        if nx < b || ny < b || nx >= (w - DETECT_BORDER) as f64 || ny >= (h - DETECT_BORDER) as f64 {
            return None;
        }
        if ns < 1.0 || ns > spo as f64 {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        s = ns as usize;
    }
    None
}

fn passes_edge_test(dog: &Plane, x: usize, y: usize, edge_ratio: f64) -> bool {
    let v = dog.at(x, y);
    let dxx = dog.at(x + 1, y) + dog.at(x - 1, y) - 2.0 * v;
    let dyy = dog.at(x, y + 1) + dog.at(x, y - 1) - 2.0 * v;
    let dxy = 0.25 * (dog.at(x + 1, y + 1) - dog.at(x - 1, y + 1) - dog.at(x + 1, y - 1) + dog.at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    if det <= 0.0 {
        return false;
    }
    tr * tr / det <= (edge_ratio + 1.0) * (edge_ratio + 1.0) / edge_ratio
}

/// DoG extrema over 26 neighbors, refined to sub-pixel/sub-level accuracy,
/// with low-contrast and edge-like responses rejected.
pub fn detect_keypoints(ss: &ScaleSpace, contrast_threshold: f64, edge_ratio: f64) -> Vec<Keypoint> {
    let spo = ss.scales_per_octave;
    let prefilter = 0.5 * contrast_threshold;
    let mut out = Vec::new();
    for oct in &ss.octaves {
        if oct.width <= 2 * DETECT_BORDER || oct.height <= 2 * DETECT_BORDER {
            continue;
        }
        let dogs = &oct.dogs;
        let found: Vec<Keypoint> = (1..=spo)
            .flat_map(|s| (DETECT_BORDER..oct.height - DETECT_BORDER).map(move |y| (s, y)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .flat_map_iter(|(s, y)| {
                let mut row_kps = Vec::new();
                for x in DETECT_BORDER..oct.width - DETECT_BORDER {
                    let v = dogs[s].at(x, y);
                    if v.abs() < prefilter || !is_extremum(dogs, s, x, y) {
                        continue;
                    }
                    let Some(r) = refine(dogs, x, y, s, spo) else {
                        continue;
                    };
                    if r.value.abs() < contrast_threshold {
                        continue;
                    }
                    if !passes_edge_test(&dogs[r.s], r.x, r.y, edge_ratio) {
                        continue;
                    }
                    let ox = r.x as f64 + r.offset[0];
                    let oy = r.y as f64 + r.offset[1];
                    let level = r.s as f64 + r.offset[2];
                    let scale = oct.scale();
                    let (bx, by) = (ox * scale, oy * scale);
                    if bx < 0.0 || by < 0.0 || bx >= ss.base_width as f64 || by >= ss.base_height as f64 {
                        continue;
                    }
                    row_kps.push(Keypoint {
                        x: bx,
                        y: by,
                        sigma: ss.level_sigma(level) * scale,
                        orientation: 0.0,
                        descriptor: Vec::new(),
                        octave: oct.index,
                        layer: r.s,
                        octave_x: ox,
                        octave_y: oy,
                        octave_level: level,
                    });
                }
                row_kps
            })
            .collect();
        out.extend(dedup_refined(found));
    }
    out
}

/// Several raw extrema can refine onto the same lattice point; keep the first.
fn dedup_refined(kps: Vec<Keypoint>) -> Vec<Keypoint> {
    let mut seen = HashSet::new();
    kps.into_iter()
        .filter(|k| seen.insert((k.layer, k.octave_x.to_bits(), k.octave_y.to_bits())))
        .collect()
}

fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Matches described keypoints against each other.
///
/// For each keypoint the nearest and second-nearest other keypoints by
/// descriptor distance are found, skipping candidates closer than
/// `min_shift` pixels in the image. The match is kept when
/// `d1 / d2 < ratio`. Each unordered pair is reported once.
pub fn match_keypoints(kps: &[Keypoint], ratio: f64, min_shift: f64) -> Vec<MatchPair> {
    let described: Vec<&Keypoint> = kps.iter().filter(|k| k.descriptor.len() == DESCRIPTOR_LEN).collect();
    if described.len() < 3 {
        return Vec::new();
    }
    let tree = KdTree::build(described.iter().map(|k| k.descriptor.as_slice()).collect());
    let min_shift2 = min_shift * min_shift;
    let best: Vec<Option<(usize, f64)>> = (0..described.len())
        .into_par_iter()
        .map(|i| {
            let a = described[i];
            let [first, second] = tree.nearest_two(&a.descriptor, |j| {
                let b = described[j];
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                j != i && dx * dx + dy * dy >= min_shift2
            });
            let (j, d1) = first?;
            let (_, d2) = second?;
            (d2 > 0.0 && d1 / d2 < ratio).then_some((j, d1))
        })
        .collect();

    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (i, m) in best.into_iter().enumerate() {
        let Some((j, dist)) = m else { continue };
        if !seen.insert((i.min(j), i.max(j))) {
            continue;
        }
        let (a, b) = (described[i], described[j]);
        pairs.push(MatchPair::canonical(
            Point::new(a.x, a.y),
            Point::new(b.x, b.y),
            dist,
            SourceKind::Keypoint,
            a.sigma,
            b.sigma,
            wrap_angle(b.orientation - a.orientation),
        ));
    }
    pairs
}
