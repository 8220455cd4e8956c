//! Gaussian and difference-of-Gaussian pyramids.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagekit::GrayImage;

/// Blur already present in a camera image, in pixels.
const ASSUMED_INPUT_BLUR: f64 = 0.5;

/// Smallest octave side the pyramid will produce.
pub const MIN_OCTAVE_SIDE: usize = 8;

/// A single-channel floating-point raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bounds-checked read; `None` outside the plane.
    #[inline]
    pub fn try_at(&self, x: isize, y: isize) -> Option<f64> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    fn clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.at(cx, cy)
    }

    /// Every other pixel in both directions.
    fn downsample(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut out = Plane::new(w, h);
        for y in 0..h {
            for x in 0..w {
                out.data[y * w + x] = self.at(2 * x, 2 * y);
            }
        }
        out
    }

    fn sub(&self, other: &Plane) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let mut tmp = Plane::new(w, h);
    tmp.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                *out = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * src.clamped(x as isize + i as isize - r, y as isize))
                    .sum();
            }
        });
    let mut out = Plane::new(w, h);
    out.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                *o = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * tmp.clamped(x as isize, y as isize + i as isize - r))
                    .sum();
            }
        });
    out
}

/// One octave of the pyramid.
#[derive(Debug, Clone)]
pub struct Octave {
    /// Octave index; pixel `(x, y)` here maps to `(x, y) · 2^index` in the
    /// base image.
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub gaussians: Vec<Plane>,
    pub dogs: Vec<Plane>,
}

impl Octave {
    pub fn scale(&self) -> f64 {
        (1usize << self.index) as f64
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
    pub scales_per_octave: usize,
    pub sigma0: f64,
    pub base_width: usize,
    pub base_height: usize,
}

impl ScaleSpace {
    /// Blur of Gaussian level `level` (possibly fractional) relative to its
    /// own octave's pixel grid.
    pub fn level_sigma(&self, level: f64) -> f64 {
        self.sigma0 * (level / self.scales_per_octave as f64).exp2()
    }
}

/// Default octave count for an image: `min(4, ⌊log2(min(w, h) / 16)⌋)`, at
/// least 1.
pub fn default_octaves(width: usize, height: usize) -> usize {
    let side = width.min(height) as f64 / 16.0;
    if side < 2.0 {
        return 1;
    }
    (side.log2().floor() as usize).clamp(1, 4)
}

/// Builds `octaves` octaves of `scales_per_octave + 3` Gaussian levels at
/// `σ = sigma0 · 2^(s / scales_per_octave)` and their adjacent differences.
/// Octaves stop early rather than shrink below [`MIN_OCTAVE_SIDE`].
pub fn build_scale_space(
    img: &GrayImage,
    octaves: usize,
    scales_per_octave: usize,
    sigma0: f64,
) -> Result<ScaleSpace> {
    if img.width() < 16 || img.height() < 16 {
        return Err(Error::invalid(format!(
            "scale space needs at least 16x16 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    if octaves == 0 || scales_per_octave == 0 || !(sigma0 > 0.0) {
        return Err(Error::invalid(format!(
            "invalid scale space parameters: octaves {octaves}, scales {scales_per_octave}, sigma0 {sigma0}"
        )));
    }
    let n_levels = scales_per_octave + 3;
    let sigmas: Vec<f64> = (0..n_levels)
        .map(|s| sigma0 * (s as f64 / scales_per_octave as f64).exp2())
        .collect();
    let incr: Vec<f64> = (1..n_levels)
        .map(|s| (sigmas[s] * sigmas[s] - sigmas[s - 1] * sigmas[s - 1]).sqrt())
        .collect();

    let base = Plane {
        width: img.width(),
        height: img.height(),
        data: img.data().to_vec(),
    };
    let pre = (sigma0 * sigma0 - ASSUMED_INPUT_BLUR * ASSUMED_INPUT_BLUR).max(0.0).sqrt();
    let mut seed = gaussian_blur(&base, pre);

    let mut out = Vec::with_capacity(octaves);
    for index in 0..octaves {
        let mut gaussians = Vec::with_capacity(n_levels);
        gaussians.push(seed);
        for s in 1..n_levels {
            let next = gaussian_blur(&gaussians[s - 1], incr[s - 1]);
            gaussians.push(next);
        }
        let dogs = gaussians.windows(2).map(|p| p[1].sub(&p[0])).collect();
        let (w, h) = (gaussians[0].width, gaussians[0].height);
        let next_seed = gaussians[scales_per_octave].downsample();
        out.push(Octave {
            index,
            width: w,
            height: h,
            gaussians,
            dogs,
        });
        if next_seed.width < MIN_OCTAVE_SIDE || next_seed.height < MIN_OCTAVE_SIDE {
            break;
        }
        seed = next_seed;
    }
    Ok(ScaleSpace {
        octaves: out,
        scales_per_octave,
        sigma0,
        base_width: img.width(),
        base_height: img.height(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_dog() {
        let img = GrayImage::filled(64, 64, 0.37).unwrap();
        let ss = build_scale_space(&img, 3, 3, 1.6).unwrap();
        for oct in &ss.octaves {
            assert_eq!(oct.gaussians.len(), 6);
            assert_eq!(oct.dogs.len(), 5);
            for d in &oct.dogs {
                assert!(d.data.iter().all(|v| v.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn octave_dimensions_halve() {
        let img = GrayImage::filled(512, 512, 0.5).unwrap();
        let ss = build_scale_space(&img, 4, 3, 1.6).unwrap();
        let sides: Vec<_> = ss.octaves.iter().map(|o| o.width).collect();
        assert_eq!(sides, vec![512, 256, 128, 64]);

        let small = GrayImage::filled(20, 17, 0.5).unwrap();
        let ss = build_scale_space(&small, 5, 3, 1.6).unwrap();
        let dims: Vec<_> = ss.octaves.iter().map(|o| (o.width, o.height)).collect();
        assert_eq!(dims, vec![(20, 17), (10, 8)]);
    }

    #[test]
    fn rejects_bad_input() {
        let img = GrayImage::filled(15, 40, 0.5).unwrap();
        assert!(build_scale_space(&img, 1, 3, 1.6).is_err());
        let img = GrayImage::filled(32, 32, 0.5).unwrap();
        assert!(build_scale_space(&img, 0, 3, 1.6).is_err());
        assert!(build_scale_space(&img, 1, 0, 1.6).is_err());
        assert!(build_scale_space(&img, 1, 3, 0.0).is_err());
    }

    #[test]
    fn default_octave_rule() {
        assert_eq!(default_octaves(512, 512), 4);
        assert_eq!(default_octaves(128, 300), 3);
        assert_eq!(default_octaves(32, 32), 1);
        assert_eq!(default_octaves(20, 20), 1);
    }
}
