//! Image decoding, grayscale conversion, resizing and binary-mask morphology.
//!
//! Every stage of the detector works on [`GrayImage`], a luminance raster with
//! values in `[0, 1]`. Detection results are reported as [`BinaryMask`]s.

use std::collections::VecDeque;
use std::path::Path;

use image::{ImageFormat, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// Luma weights of ITU-R BT.601.
pub const BT601: [f64; 3] = [0.299, 0.587, 0.114];

/// Converts an RGB triple in `[0, 1]` to luminance.
///
/// Gray triples `(v, v, v)` map to `v` exactly.
pub fn to_grayscale(r: f64, g: f64, b: f64) -> f64 {
    if r == g && g == b {
        return r;
    }
    (BT601[0] * r + BT601[1] * g + BT601[2] * b).clamp(0.0, 1.0)
}

/// An axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }
}

/// A luminance raster, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel. Values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Bilinear sample at a continuous position (pixel centers on integer
    /// coordinates), edge-clamped.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (ix, iy) = (x0 as isize, y0 as isize);
        let v00 = self.get_clamped(ix, iy);
        if fx == 0.0 && fy == 0.0 {
            return v00;
        }
        let v10 = self.get_clamped(ix + 1, iy);
        let v01 = self.get_clamped(ix, iy + 1);
        let v11 = self.get_clamped(ix + 1, iy + 1);
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        (top + (bottom - top) * fy).clamp(0.0, 1.0)
    }

    pub fn crop(&self, r: Rect) -> Result<GrayImage> {
        if r.w == 0 || r.h == 0 || !r.fits_in(self.width, self.height) {
            return Err(Error::invalid(format!(
                "crop {r:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(r.area());
        for y in r.y..r.bottom() {
            data.extend_from_slice(&self.data[y * self.width + r.x..y * self.width + r.right()]);
        }
        GrayImage::new(r.w, r.h, data)
    }

    /// Quantizes to 8 bits and writes a single-channel PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([to_u8(self.get(x as usize, y as usize))])
        });
        buf.save_with_format(path, ImageFormat::Png)
            .map_err(|e| encode_error(path, e))
    }
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn encode_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::Encode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Reads a PNG or JPEG file and converts it to grayscale.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes an in-memory PNG or JPEG.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    let format = image::guess_format(bytes).map_err(|e| Error::Decode {
        format: "unknown".into(),
        message: e.to_string(),
    })?;
    let format_name = format!("{format:?}").to_uppercase();
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Decode {
            format: format_name,
            message: "only PNG and JPEG are supported".into(),
        });
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
        format: format_name,
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if img.color().has_color() {
        img.to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|c| c as f64 / 255.0);
                to_grayscale(r, g, b)
            })
            .collect()
    } else {
        img.to_luma8().pixels().map(|p| p.0[0] as f64 / 255.0).collect()
    };
    GrayImage::new(w, h, data)
}

/// Bilinear resize with pixel-center alignment and edge clamping.
pub fn resize(img: &GrayImage, new_w: usize, new_h: usize) -> Result<GrayImage> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid(format!(
            "resize target must be at least 1x1, got {new_w}x{new_h}"
        )));
    }
    if new_w == img.width && new_h == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    let mut data = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        for x in 0..new_w {
            let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            data.push(img.sample_bilinear(src_x, src_y));
        }
    }
    GrayImage::new(new_w, new_h, data)
}

/// A per-pixel boolean mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask buffer holds {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn fill_rect(&mut self, r: Rect) {
        for y in r.y..r.bottom().min(self.height) {
            for x in r.x..r.right().min(self.width) {
                self.set(x, y, true);
            }
        }
    }

    /// Sets every pixel whose center lies within `radius` of `(cx, cy)`.
    pub fn fill_disk(&mut self, cx: f64, cy: f64, radius: f64) {
        let r2 = radius * radius;
        let x0 = (cx - radius).floor().max(0.0) as usize;
        let y0 = (cy - radius).floor().max(0.0) as usize;
        let x1 = ((cx + radius).ceil() as isize).min(self.width as isize - 1);
        let y1 = ((cy + radius).ceil() as isize).min(self.height as isize - 1);
        if x1 < 0 || y1 < 0 {
            return;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r2 {
                    self.set(x, y, true);
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// `true` when every pixel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_size(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        BinaryMask::from_bits(self.width, self.height, bits)
    }

    pub(crate) fn check_same_size(&self, other: &BinaryMask) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::invalid(format!(
                "mask dimensions differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Writes an 8-bit PNG with 255 for set pixels and 0 elsewhere.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        });
        buf.save_with_format(path, ImageFormat::Png)
            .map_err(|e| encode_error(path, e))
    }

    /// Reads a mask image; pixels brighter than mid-gray count as set.
    pub fn load_png(path: impl AsRef<Path>) -> Result<BinaryMask> {
        let img = load_image(path)?;
        let bits = img.data().iter().map(|v| *v > 0.5).collect();
        BinaryMask::from_bits(img.width(), img.height(), bits)
    }
}

/// Square-window binary max/min filter, separable. Out-of-image neighbors are
/// ignored, so the border neither grows nor erodes the mask on its own.
fn rank_filter(mask: &BinaryMask, radius: usize, any: bool) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let reduce = |mut vals: std::iter::Copied<std::slice::Iter<'_, bool>>| -> bool {
        if any {
            vals.any(|b| b)
        } else {
            vals.all(|b| b)
        }
    };
    let mut horiz = vec![false; w * h];
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            horiz[y * w + x] = reduce(row[lo..=hi].iter().copied());
        }
    }
    // Column pass over the transposed row result.
    let mut cols = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            cols[x * h + y] = horiz[y * w + x];
        }
    }
    let mut out = vec![false; w * h];
    for x in 0..w {
        let col = &cols[x * h..(x + 1) * h];
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            out[y * w + x] = reduce(col[lo..=hi].iter().copied());
        }
    }
    BinaryMask {
        width: w,
        height: h,
        bits: out,
    }
}

/// Dilation with a `(2·radius+1)²` square structuring element.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    rank_filter(mask, radius, true)
}

/// Erosion with a `(2·radius+1)²` square structuring element.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    rank_filter(mask, radius, false)
}

/// Labels 8-connected components. Returns the label image (0 = background)
/// and the pixel count of each label, indexed from label 1.
pub fn connected_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if mask.bits[n] && labels[n] == 0 {
                        labels[n] = label;
                        queue.push_back(n);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Clears every 8-connected component with fewer than `min_area` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    if min_area <= 1 {
        return mask.clone();
    }
    let (labels, sizes) = connected_components(mask);
    let bits = labels
        .iter()
        .map(|&l| l != 0 && sizes[l as usize - 1] >= min_area)
        .collect();
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits,
    }
}

/// A line from one point to another, in pixel coordinates.
pub type Segment = ((f64, f64), (f64, f64));

/// Renders the grayscale image with the mask tinted red and each segment
/// drawn as a green line.
pub fn render_overlay(
    img: &GrayImage,
    mask: &BinaryMask,
    segments: &[Segment],
) -> RgbImage {
    let mut out = RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = to_u8(img.get(x as usize, y as usize));
        if mask.get(x as usize, y as usize) {
            Rgb([v / 2 + 127, v / 2, v / 2])
        } else {
            Rgb([v, v, v])
        }
    });
    for &((x0, y0), (x1, y1)) in segments {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (x0 + (x1 - x0) * t, y0 + (y1 - y0) * t);
            let (px, py) = (x.round(), y.round());
            if px >= 0.0 && py >= 0.0 && (px as u32) < out.width() && (py as u32) < out.height() {
                out.put_pixel(px as u32, py as u32, Rgb([0, 255, 0]));
            }
        }
    }
    out
}

pub fn save_overlay(overlay: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    overlay
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| encode_error(path, e))
}
