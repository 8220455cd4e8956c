//! Synthetic copy-move forgeries with exact ground truth.
//!
//! Base images are procedural gradient-noise fields; a forgery copies a
//! rectangle, optionally scales and rotates it about its center, and pastes
//! it elsewhere in the same image. The truth mask marks both the source
//! rectangle and the pasted footprint.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{write_manifest, ManifestRow};
use crate::imagekit::{BinaryMask, GrayImage, Rect};

pub const CANVAS_SIDE: usize = 512;
/// Forged region sides are drawn from this inclusive range.
pub const REGION_SIDE: (usize, usize) = (48, 96);
/// Rotation range of the `rotated` scenario, degrees.
pub const ROTATION_RANGE: (f64, f64) = (10.0, 30.0);
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.25);
const BORDER_MARGIN: usize = 24;

/// One copy-move operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgerySpec {
    pub src_rect: Rect,
    /// Top-left of the scaled, unrotated paste.
    pub dst: (usize, usize),
    /// Degrees, counter-clockwise in image coordinates (y down).
    pub rotation: f64,
    pub scale: f64,
    pub seed: u64,
}

impl ForgerySpec {
    pub fn translation(src_rect: Rect, dst: (usize, usize)) -> Self {
        Self {
            src_rect,
            dst,
            rotation: 0.0,
            scale: 1.0,
            seed: 0,
        }
    }

    fn src_center(&self) -> (f64, f64) {
        let r = &self.src_rect;
        (r.x as f64 + (r.w as f64 - 1.0) / 2.0, r.y as f64 + (r.h as f64 - 1.0) / 2.0)
    }

    fn dst_center(&self) -> (f64, f64) {
        let r = &self.src_rect;
        (
            self.dst.0 as f64 + (r.w as f64 * self.scale - 1.0) / 2.0,
            self.dst.1 as f64 + (r.h as f64 * self.scale - 1.0) / 2.0,
        )
    }

    /// Maps a destination pixel back into source coordinates.
    fn inverse_map(&self, qx: f64, qy: f64) -> (f64, f64) {
        let (cdx, cdy) = self.dst_center();
        let (csx, csy) = self.src_center();
        let (vx, vy) = (qx - cdx, qy - cdy);
        let (sin, cos) = self.rotation.to_radians().sin_cos();
        // R(-θ) v / s
        let ux = (cos * vx + sin * vy) / self.scale;
        let uy = (-sin * vx + cos * vy) / self.scale;
        (ux + csx, uy + csy)
    }

    fn maps_inside_source(&self, u: (f64, f64)) -> bool {
        let r = &self.src_rect;
        u.0 >= r.x as f64 - 0.5
            && u.0 < r.right() as f64 - 0.5
            && u.1 >= r.y as f64 - 0.5
            && u.1 < r.bottom() as f64 - 0.5
    }

    /// Half-width and half-height of the pasted region's bounding box.
    fn half_extents(&self) -> (f64, f64) {
        let (sin, cos) = self.rotation.to_radians().sin_cos();
        let (w, h) = (self.src_rect.w as f64 * self.scale, self.src_rect.h as f64 * self.scale);
        (
            (cos.abs() * w + sin.abs() * h) / 2.0,
            (sin.abs() * w + cos.abs() * h) / 2.0,
        )
    }

    /// Destination pixels covered by the paste. May lie outside any image.
    pub fn paste_footprint(&self) -> Vec<(isize, isize)> {
        let (cx, cy) = self.dst_center();
        let (hw, hh) = self.half_extents();
        let (x0, x1) = ((cx - hw).floor() as isize - 1, (cx + hw).ceil() as isize + 1);
        let (y0, y1) = ((cy - hh).floor() as isize - 1, (cy + hh).ceil() as isize + 1);
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.maps_inside_source(self.inverse_map(x as f64, y as f64)) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

fn check_spec(spec: &ForgerySpec, width: usize, height: usize) -> Result<Vec<(usize, usize)>> {
    let r = spec.src_rect;
    if r.w == 0 || r.h == 0 || !r.fits_in(width, height) {
        return Err(Error::invalid(format!("source rect {r:?} outside {width}x{height} image")));
    }
    if !spec.scale.is_finite() || spec.scale <= 0.0 || !spec.rotation.is_finite() {
        return Err(Error::invalid(format!(
            "bad transform: rotation {} scale {}",
            spec.rotation, spec.scale
        )));
    }
    let footprint = spec.paste_footprint();
    if footprint.is_empty() {
        return Err(Error::invalid("paste footprint is empty"));
    }
    let mut inside = Vec::with_capacity(footprint.len());
    for (x, y) in footprint {
        if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
            return Err(Error::invalid(format!("paste footprint leaves the image at ({x}, {y})")));
        }
        let (ux, uy) = (x as usize, y as usize);
        if r.contains(ux, uy) {
            return Err(Error::invalid(format!("paste footprint overlaps the source at ({x}, {y})")));
        }
        inside.push((ux, uy));
    }
    Ok(inside)
}

/// Applies one forgery. Returns the forged image and the truth mask (source
/// rectangle ∪ paste footprint).
pub fn apply_forgery(img: &GrayImage, spec: &ForgerySpec) -> Result<(GrayImage, BinaryMask)> {
    apply_forgeries(img, std::slice::from_ref(spec))
}

/// Applies several forgeries in order; each reads from the original image.
pub fn apply_forgeries(img: &GrayImage, specs: &[ForgerySpec]) -> Result<(GrayImage, BinaryMask)> {
    let mut out = img.clone();
    let mut mask = BinaryMask::new(img.width(), img.height());
    for spec in specs {
        let footprint = check_spec(spec, img.width(), img.height())?;
        for (x, y) in footprint {
            let (ux, uy) = spec.inverse_map(x as f64, y as f64);
            out.set(x, y, img.sample_bilinear(ux, uy));
            mask.set(x, y, true);
        }
        mask.fill_rect(spec.src_rect);
    }
    Ok((out, mask))
}

/// Corpus flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Smooth, low-texture fields; pure translation.
    Flat,
    /// Moderately textured fields; pure translation.
    Plain,
    /// Strongly textured fields; pure translation.
    Rough,
    /// Textured fields; paste rotated by 10°–30°.
    Rotated,
    /// Textured fields; paste scaled by 0.8–1.25.
    Scaled,
    /// Each image draws one of the above.
    Mixed,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Flat,
        Scenario::Plain,
        Scenario::Rough,
        Scenario::Rotated,
        Scenario::Scaled,
        Scenario::Mixed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Flat => "flat",
            Scenario::Plain => "plain",
            Scenario::Rough => "rough",
            Scenario::Rotated => "rotated",
            Scenario::Scaled => "scaled",
            Scenario::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s)
    }
}

/// Sidecar written beside each tampered image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSidecar {
    pub scenario: Scenario,
    pub forgeries: Vec<ForgerySpec>,
}

/// 2-D gradient noise over an integer lattice.
struct GradientNoise {
    perm: [u8; 512],
}

impl GradientNoise {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut p: Vec<u8> = (0..=255).collect();
        for i in (1..256).rev() {
            let j = rng.gen_range(0..=i);
            p.swap(i, j);
        }
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = p[i % 256];
        }
        Self { perm }
    }

    fn grad(&self, ix: i64, iy: i64, dx: f64, dy: f64) -> f64 {
        const H: f64 = std::f64::consts::FRAC_1_SQRT_2;
        let h = self.perm[(self.perm[(ix & 255) as usize] as usize + (iy & 255) as usize) & 511] & 7;
        let (gx, gy) = match h {
            0 => (1.0, 0.0),
            1 => (-1.0, 0.0),
            2 => (0.0, 1.0),
            3 => (0.0, -1.0),
            4 => (H, H),
            5 => (-H, H),
            6 => (H, -H),
            _ => (-H, -H),
        };
        gx * dx + gy * dy
    }

    /// Roughly in `[-1, 1]`.
    fn at(&self, x: f64, y: f64) -> f64 {
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (ix, iy) = (x0 as i64, y0 as i64);
        let n00 = self.grad(ix, iy, fx, fy);
        let n10 = self.grad(ix + 1, iy, fx - 1.0, fy);
        let n01 = self.grad(ix, iy + 1, fx, fy - 1.0);
        let n11 = self.grad(ix + 1, iy + 1, fx - 1.0, fy - 1.0);
        let (u, v) = (fade(fx), fade(fy));
        let top = n00 + u * (n10 - n00);
        let bottom = n01 + u * (n11 - n01);
        1.4 * (top + v * (bottom - top))
    }

    fn fbm(&self, x: f64, y: f64, period: f64, octaves: usize, persistence: f64) -> f64 {
        let (mut amp, mut freq, mut sum, mut norm) = (1.0, 1.0 / period, 0.0, 0.0);
        for o in 0..octaves {
            // Offset octaves so their lattices do not line up.
            let off = 17.31 * o as f64;
            sum += amp * self.at(x * freq + off, y * freq - off);
            norm += amp;
            amp *= persistence;
            freq *= 2.0;
        }
        sum / norm
    }
}

struct TextureParams {
    period: f64,
    octaves: usize,
    persistence: f64,
    contrast: f64,
    /// tanh gain applied to the fbm value; sharpens blob boundaries.
    gain: f64,
    grain: f64,
}

fn texture_for(scenario: Scenario) -> TextureParams {
    match scenario {
        Scenario::Flat => TextureParams { period: 192.0, octaves: 2, persistence: 0.5, contrast: 0.35, gain: 1.0, grain: 0.012 },
        Scenario::Plain => TextureParams { period: 48.0, octaves: 4, persistence: 0.6, contrast: 0.8, gain: 4.0, grain: 0.01 },
        Scenario::Rough => TextureParams { period: 24.0, octaves: 5, persistence: 0.75, contrast: 0.9, gain: 4.0, grain: 0.02 },
        Scenario::Rotated | Scenario::Scaled | Scenario::Mixed => {
            TextureParams { period: 16.0, octaves: 4, persistence: 0.7, contrast: 0.9, gain: 4.0, grain: 0.015 }
        }
    }
}

/// A procedural base image for `scenario`, fully determined by `rng`.
pub fn base_image(scenario: Scenario, width: usize, height: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    let t = texture_for(scenario);
    let noise = GradientNoise::new(rng);
    let level = rng.gen_range(0.4..0.6);
    let ox = rng.gen_range(0.0..1000.0);
    let oy = rng.gen_range(0.0..1000.0);
    let grain: Vec<f64> = (0..width * height).map(|_| rng.gen_range(-1.0..1.0) * t.grain).collect();
    GrayImage::from_fn(width, height, |x, y| {
        let n = noise.fbm(x as f64 + ox, y as f64 + oy, t.period, t.octaves, t.persistence);
        level + 0.5 * t.contrast * (t.gain * n).tanh() + grain[y * width + x]
    })
    .expect("generated dimensions are positive")
}

/// Draws a valid spec for `scenario` (which must not be `Mixed`).
pub fn sample_spec(scenario: Scenario, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<ForgerySpec> {
    let seed = rng.gen();
    for _ in 0..10_000 {
        let w = rng.gen_range(REGION_SIDE.0..=REGION_SIDE.1);
        let h = rng.gen_range(REGION_SIDE.0..=REGION_SIDE.1);
        let (rotation, scale) = match scenario {
            Scenario::Rotated => (rng.gen_range(ROTATION_RANGE.0..=ROTATION_RANGE.1), 1.0),
            Scenario::Scaled => (0.0, rng.gen_range(SCALE_RANGE.0..=SCALE_RANGE.1)),
            _ => (0.0, 1.0),
        };
        if w + 2 * BORDER_MARGIN >= width || h + 2 * BORDER_MARGIN >= height {
            break;
        }
        let sx = rng.gen_range(BORDER_MARGIN..=width - w - BORDER_MARGIN);
        let sy = rng.gen_range(BORDER_MARGIN..=height - h - BORDER_MARGIN);
        let probe = ForgerySpec {
            src_rect: Rect::new(sx, sy, w, h),
            dst: (0, 0),
            rotation,
            scale,
            seed,
        };
        let (hw, hh) = probe.half_extents();
        let (ws, hs) = (w as f64 * scale, h as f64 * scale);
        // Center range that keeps the rotated bounding box inside the margin.
        let lo_x = BORDER_MARGIN as f64 + hw;
        let hi_x = width as f64 - BORDER_MARGIN as f64 - hw;
        let lo_y = BORDER_MARGIN as f64 + hh;
        let hi_y = height as f64 - BORDER_MARGIN as f64 - hh;
        if lo_x >= hi_x || lo_y >= hi_y {
            continue;
        }
        let cx = rng.gen_range(lo_x..hi_x);
        let cy = rng.gen_range(lo_y..hi_y);
        let dx = (cx - (ws - 1.0) / 2.0).round();
        let dy = (cy - (hs - 1.0) / 2.0).round();
        if dx < 0.0 || dy < 0.0 {
            continue;
        }
        let spec = ForgerySpec {
            dst: (dx as usize, dy as usize),
            ..probe
        };
        if check_spec(&spec, width, height).is_ok() {
            return Ok(spec);
        }
    }
    Err(Error::invalid(format!(
        "cannot place a {scenario:?} forgery in a {width}x{height} image"
    )))
}

fn image_rng(seed: u64, kind: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 32) | index as u64);
    rng
}

fn concrete_scenario(scenario: Scenario, rng: &mut ChaCha8Rng) -> Scenario {
    if scenario == Scenario::Mixed {
        const CHOICES: [Scenario; 5] = [
            Scenario::Flat,
            Scenario::Plain,
            Scenario::Rough,
            Scenario::Rotated,
            Scenario::Scaled,
        ];
        CHOICES[rng.gen_range(0..CHOICES.len())]
    } else {
        scenario
    }
}

/// Writes `n_tampered` forged and `n_authentic` untouched 512×512 images,
/// their truth masks, per-image spec sidecars and `manifest.csv` into
/// `out_dir`. Output depends only on the arguments.
pub fn gen_corpus(
    out_dir: &Path,
    n_tampered: usize,
    n_authentic: usize,
    scenario: Scenario,
    seed: u64,
) -> Result<Vec<ManifestRow>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let jobs: Vec<(bool, usize)> = (0..n_tampered)
        .map(|i| (true, i))
        .chain((0..n_authentic).map(|i| (false, i)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(tampered, i)| -> Result<ManifestRow> {
            let mut rng = image_rng(seed, tampered as u64, i);
            let sc = concrete_scenario(scenario, &mut rng);
            let base = base_image(sc, CANVAS_SIDE, CANVAS_SIDE, &mut rng);
            if !tampered {
                let filename = format!("a_{i:04}.png");
                base.save_png(out_dir.join(&filename))?;
                return Ok(ManifestRow { filename, tampered: false, mask_path: None });
            }
            let spec = sample_spec(sc, CANVAS_SIDE, CANVAS_SIDE, &mut rng)?;
            let (forged, mask) = apply_forgery(&base, &spec)?;
            let stem = format!("t_{i:04}");
            let filename = format!("{stem}.png");
            let mask_name = format!("{stem}_mask.png");
            forged.save_png(out_dir.join(&filename))?;
            mask.save_png(out_dir.join(&mask_name))?;
            let sidecar = SpecSidecar { scenario: sc, forgeries: vec![spec] };
            let sidecar_path = out_dir.join(format!("{stem}.spec.json"));
            let mut text = serde_json::to_string_pretty(&sidecar)?;
            text.push('\n');
            std::fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))?;
            Ok(ManifestRow { filename, tampered: true, mask_path: Some(mask_name) })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.filename.cmp(&b.filename));
    write_manifest(out_dir, &rows)?;
    Ok(rows)
}
