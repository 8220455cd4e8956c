//! Image moments up to order three and the seven Hu invariants.
//!
//! Moments are taken over rectangular regions in region-local coordinates
//! (origin at the region's top-left pixel), with the luminance itself as the
//! density. Identical patches therefore produce identical moments wherever
//! they sit in the image.

use crate::error::{Error, Result};
use crate::imagekit::{GrayImage, Rect};

/// Moment orders `(p, q)` with `p + q ≤ 3`, in storage order.
pub const ORDERS: [(usize, usize); 10] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

/// Raw, central and normalized central moments of a region.
///
/// All three tables are indexed as `[p][q]`; entries with `p + q > 3` are
/// unused and stay zero. `mu` and `eta` are zero until
/// [`central_normalized`] fills them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentSet {
    pub m: [[f64; 4]; 4],
    pub mu: [[f64; 4]; 4],
    pub eta: [[f64; 4]; 4],
}

impl MomentSet {
    pub fn m(&self, p: usize, q: usize) -> f64 {
        self.m[p][q]
    }

    pub fn mu(&self, p: usize, q: usize) -> f64 {
        self.mu[p][q]
    }

    pub fn eta(&self, p: usize, q: usize) -> f64 {
        self.eta[p][q]
    }

    /// Builds a set directly from normalized central moments. Handy when the
    /// invariants are the only thing of interest.
    pub fn from_eta(eta20: f64, eta02: f64, eta11: f64, eta30: f64, eta21: f64, eta12: f64, eta03: f64) -> Self {
        let mut ms = MomentSet::default();
        ms.eta[2][0] = eta20;
        ms.eta[0][2] = eta02;
        ms.eta[1][1] = eta11;
        ms.eta[3][0] = eta30;
        ms.eta[2][1] = eta21;
        ms.eta[1][2] = eta12;
        ms.eta[0][3] = eta03;
        ms
    }
}

/// The seven Hu invariants `I1..I7`, stored as `[I1, ..., I7]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct HuVector(pub [f64; 7]);

impl HuVector {
    /// Invariant `I<k>` for `k` in `1..=7`.
    pub fn i(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn as_array(&self) -> &[f64; 7] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Raw moments `m_pq = Σ x^p y^q f(x, y)` for `p + q ≤ 3` over `region`.
pub fn raw_moments(img: &GrayImage, region: Rect) -> Result<MomentSet> {
    if region.w == 0 || region.h == 0 {
        return Err(Error::invalid(format!("empty moment region {region:?}")));
    }
    if !region.fits_in(img.width(), img.height()) {
        return Err(Error::invalid(format!(
            "moment region {region:?} exceeds {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let stride = img.width();
    let data = img.data();
    let mut ms = MomentSet::default();
    for ly in 0..region.h {
        let row = &data[(region.y + ly) * stride + region.x..][..region.w];
        // Row sums of x^k f for k = 0..3.
        let mut s = [0.0f64; 4];
        for (lx, &v) in row.iter().enumerate() {
            let x = lx as f64;
            let xv = x * v;
            s[0] += v;
            s[1] += xv;
            s[2] += x * xv;
            s[3] += x * x * xv;
        }
        let y = ly as f64;
        let y2 = y * y;
        let y3 = y2 * y;
        ms.m[0][0] += s[0];
        ms.m[1][0] += s[1];
        ms.m[2][0] += s[2];
        ms.m[3][0] += s[3];
        ms.m[0][1] += y * s[0];
        ms.m[1][1] += y * s[1];
        ms.m[2][1] += y * s[2];
        ms.m[0][2] += y2 * s[0];
        ms.m[1][2] += y2 * s[1];
        ms.m[0][3] += y3 * s[0];
    }
    Ok(ms)
}

/// Fills central moments about the centroid and normalized central moments
/// `η_pq = μ_pq / μ00^(1 + (p+q)/2)`.
pub fn central_normalized(ms: &MomentSet) -> Result<MomentSet> {
    let m = &ms.m;
    let m00 = m[0][0];
    if !(m00 > 0.0) {
        return Err(Error::ZeroMass);
    }
    let xb = m[1][0] / m00;
    let yb = m[0][1] / m00;

    let mut out = *ms;
    let mu = &mut out.mu;
    mu[0][0] = m00;
    mu[1][0] = 0.0;
    mu[0][1] = 0.0;
    mu[2][0] = m[2][0] - xb * m[1][0];
    mu[0][2] = m[0][2] - yb * m[0][1];
    mu[1][1] = m[1][1] - xb * m[0][1];
    mu[3][0] = m[3][0] - 3.0 * xb * m[2][0] + 2.0 * xb * xb * m[1][0];
    mu[0][3] = m[0][3] - 3.0 * yb * m[0][2] + 2.0 * yb * yb * m[0][1];
    mu[2][1] = m[2][1] - 2.0 * xb * m[1][1] - yb * m[2][0] + 2.0 * xb * xb * m[0][1];
    mu[1][2] = m[1][2] - 2.0 * yb * m[1][1] - xb * m[0][2] + 2.0 * yb * yb * m[1][0];

    let norm2 = m00 * m00;
    let norm3 = norm2 * m00.sqrt();
    for &(p, q) in &ORDERS[3..] {
        let norm = if p + q == 2 { norm2 } else { norm3 };
        out.eta[p][q] = out.mu[p][q] / norm;
    }
    Ok(out)
}

/// The seven Hu invariants of a moment set whose `eta` table is populated.
///
/// `I7` follows the skew form `(3η21−η03)(η30+η12)[…] + (η30−3η12)(η21+η03)[…]`:
/// it flips sign under mirroring, and its magnitude is unchanged by rotations
/// of the pixel grid.
pub fn hu_invariants(ms: &MomentSet) -> HuVector {
    let e = &ms.eta;
    let (n20, n02, n11) = (e[2][0], e[0][2], e[1][1]);
    let (n30, n21, n12, n03) = (e[3][0], e[2][1], e[1][2], e[0][3]);

    let sum_a = n30 + n12;
    let sum_b = n21 + n03;
    let diff_a = n30 - 3.0 * n12;
    let diff_b = 3.0 * n21 - n03;
    let sa2 = sum_a * sum_a;
    let sb2 = sum_b * sum_b;
    let delta = n20 - n02;

    let i1 = n20 + n02;
    let i2 = delta * delta + 4.0 * n11 * n11;
    let i3 = diff_a * diff_a + diff_b * diff_b;
    let i4 = sa2 + sb2;
    let i5 = diff_a * sum_a * (sa2 - 3.0 * sb2) + diff_b * sum_b * (3.0 * sa2 - sb2);
    let i6 = delta * (sa2 - sb2) + 4.0 * n11 * sum_a * sum_b;
    let i7 = diff_b * sum_a * (sa2 - 3.0 * sb2) + diff_a * sum_b * (3.0 * sa2 - sb2);
    HuVector([i1, i2, i3, i4, i5, i6, i7])
}

/// Raw → central/normalized → Hu for one region.
pub fn region_hu(img: &GrayImage, region: Rect) -> Result<HuVector> {
    let ms = central_normalized(&raw_moments(img, region)?)?;
    Ok(hu_invariants(&ms))
}
