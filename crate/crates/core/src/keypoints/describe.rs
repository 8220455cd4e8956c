//! Orientation assignment and 4x4x8 gradient-histogram descriptors.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{Keypoint, Plane, ScaleSpace};

pub const DESCRIPTOR_LEN: usize = GRID * GRID * ORI_BINS;

const GRID: usize = 4;
const ORI_BINS: usize = 8;
const ORI_HIST_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_RADIUS_FACTOR: f64 = 3.0 * ORI_SIGMA_FACTOR;
const ORI_PEAK_RATIO: f64 = 0.8;
const CELL_SCALE: f64 = 3.0;
const CLIP: f64 = 0.2;

static OUT_OF_BOUNDS_READS: AtomicUsize = AtomicUsize::new(0);

/// Number of gradient reads that fell outside an octave image since process
/// start. Windows are bounds-checked up front, so this stays at zero.
pub fn out_of_bounds_reads() -> usize {
    OUT_OF_BOUNDS_READS.load(Ordering::Relaxed)
}

/// Central-difference gradient `(dx, dy)` at an octave pixel.
fn gradient(plane: &Plane, x: isize, y: isize) -> Option<(f64, f64)> {
    let read = |xx, yy| plane.try_at(xx, yy);
    match (read(x + 1, y), read(x - 1, y), read(x, y + 1), read(x, y - 1)) {
        (Some(r), Some(l), Some(d), Some(u)) => Some((r - l, d - u)),
        _ => {
            OUT_OF_BOUNDS_READS.fetch_add(1, Ordering::Relaxed);
            None
        }
    }
}

/// `true` when a square window of `radius` around `(cx, cy)`, plus the one
/// pixel gradients need, lies inside the plane.
fn window_fits(plane: &Plane, cx: isize, cy: isize, radius: isize) -> bool {
    cx - radius > 0
        && cy - radius > 0
        && cx + radius + 1 < plane.width as isize
        && cy + radius + 1 < plane.height as isize
}

fn orientation_peaks(plane: &Plane, cx: isize, cy: isize, scale: f64) -> Option<Vec<f64>> {
    let radius = (ORI_RADIUS_FACTOR * scale).round() as isize;
    if !window_fits(plane, cx, cy, radius) {
        return None;
    }
    let sigma = ORI_SIGMA_FACTOR * scale;
    let denom = 2.0 * sigma * sigma;
    let mut hist = [0.0f64; ORI_HIST_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (gx, gy) = gradient(plane, cx + dx, cy + dy)?;
            let mag = gx.hypot(gy);
            let ori = gy.atan2(gx).rem_euclid(2.0 * PI);
            let w = (-((dx * dx + dy * dy) as f64) / denom).exp();
            let bin = ((ori / (2.0 * PI) * ORI_HIST_BINS as f64).floor() as usize) % ORI_HIST_BINS;
            hist[bin] += w * mag;
        }
    }
    // [1 4 6 4 1] / 16, circular.
    let n = ORI_HIST_BINS;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            (hist[(i + n - 2) % n] + hist[(i + 2) % n]
                + 4.0 * (hist[(i + n - 1) % n] + hist[(i + 1) % n])
                + 6.0 * hist[i])
                / 16.0
        })
        .collect();
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    let mut peaks = Vec::new();
    for i in 0..n {
        let (l, c, r) = (smooth[(i + n - 1) % n], smooth[i], smooth[(i + 1) % n]);
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
            let angle = (i as f64 + 0.5 + offset) * 2.0 * PI / n as f64;
            peaks.push(angle.rem_euclid(2.0 * PI));
        }
    }
    Some(peaks)
}

fn descriptor(plane: &Plane, cx: isize, cy: isize, scale: f64, angle: f64) -> Option<Vec<f32>> {
    let cell = CELL_SCALE * scale;
    let radius = (cell * std::f64::consts::SQRT_2 * (GRID as f64 + 1.0) * 0.5).round() as isize;
    if !window_fits(plane, cx, cy, radius) {
        return None;
    }
    let (cos_t, sin_t) = (angle.cos() / cell, angle.sin() / cell);
    let half = GRID as f64 / 2.0;
    let weight_denom = 2.0 * half * half;
    let mut hist = [0.0f64; DESCRIPTOR_LEN];
    for i in -radius..=radius {
        for j in -radius..=radius {
            let (jf, i_f) = (j as f64, i as f64);
            let c_rot = jf * cos_t + i_f * sin_t;
            let r_rot = -jf * sin_t + i_f * cos_t;
            let rbin = r_rot + half - 0.5;
            let cbin = c_rot + half - 0.5;
            if rbin <= -1.0 || rbin >= GRID as f64 || cbin <= -1.0 || cbin >= GRID as f64 {
                continue;
            }
            let (gx, gy) = gradient(plane, cx + j, cy + i)?;
            let mag = gx.hypot(gy) * (-(c_rot * c_rot + r_rot * r_rot) / weight_denom).exp();
            let rel = (gy.atan2(gx) - angle).rem_euclid(2.0 * PI);
            let obin = rel * ORI_BINS as f64 / (2.0 * PI);

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                let r = r0 as isize + dr;
                if r < 0 || r >= GRID as isize {
                    continue;
                }
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    let c = c0 as isize + dc;
                    if c < 0 || c >= GRID as isize {
                        continue;
                    }
                    for (dob, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let o = (o0 as usize + dob) % ORI_BINS;
                        let idx = (r as usize * GRID + c as usize) * ORI_BINS + o;
                        hist[idx] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }
    normalize_clipped(&mut hist)?;
    Some(hist.iter().map(|v| *v as f32).collect())
}

/// Unit-normalizes, then rescales so that no entry exceeds [`CLIP`] while
/// the norm stays one: the largest `k` entries are pinned at the clip level
/// and the rest share the remaining energy. Fails for vectors too sparse to
/// satisfy both constraints.
fn normalize_clipped(v: &mut [f64]) -> Option<()> {
    let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n0 > 0.0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n0);
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut rest_energy: f64 = sorted.iter().map(|x| x * x).sum();
    for k in 0..sorted.len() {
        let budget = 1.0 - k as f64 * CLIP * CLIP;
        if budget <= 0.0 || rest_energy <= 0.0 {
            return None;
        }
        let t = (budget / rest_energy).sqrt();
        if sorted[k] * t <= CLIP {
            let cut = if k == 0 { f64::INFINITY } else { sorted[k - 1] };
            for x in v.iter_mut() {
                *x = if *x >= cut { CLIP } else { *x * t };
            }
            return Some(());
        }
        rest_energy -= sorted[k] * sorted[k];
    }
    None
}

/// Assigns orientations and computes descriptors. Keypoints whose windows
/// would leave the octave image are dropped; secondary orientation peaks
/// within 80% of the strongest yield extra keypoints at the same location.
pub fn describe(ss: &ScaleSpace, kps: &[Keypoint]) -> Vec<Keypoint> {
    kps.par_iter()
        .flat_map_iter(|kp| {
            let oct = &ss.octaves[kp.octave];
            let plane = &oct.gaussians[kp.layer.min(oct.gaussians.len() - 1)];
            let scale = ss.level_sigma(kp.octave_level);
            let (cx, cy) = (kp.octave_x.round() as isize, kp.octave_y.round() as isize);
            let peaks = orientation_peaks(plane, cx, cy, scale).unwrap_or_default();
            peaks
                .into_iter()
                .filter_map(|angle| {
                    let desc = descriptor(plane, cx, cy, scale, angle)?;
                    Some(Keypoint {
                        orientation: angle,
                        descriptor: desc,
                        ..kp.clone()
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect()
}
