//! Matched location pairs shared by the block and keypoint arms.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// A position in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Lexicographic order on `(x, y)`.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

/// Which detector arm produced a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Block,
    Keypoint,
}

/// Two locations judged to carry duplicated content.
///
/// For block pairs `src`/`dst` are block top-left corners and `extent` is the
/// block side. For keypoint pairs they are keypoint centers and `extent` /
/// `dst_extent` are the detection scales at either end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub src: Point,
    pub dst: Point,
    /// `dst - src`.
    pub shift: (f64, f64),
    pub dist: f64,
    pub source_kind: SourceKind,
    pub extent: f64,
    pub dst_extent: f64,
    /// Rotation (radians) taking the neighborhood at `src` onto the one at
    /// `dst`. Always zero for block pairs.
    pub rotation: f64,
}

impl MatchPair {
    /// Builds a pair oriented so that `src` is the lexicographically smaller
    /// point. Swapping ends negates `rotation` and exchanges the extents.
    pub fn canonical(
        a: Point,
        b: Point,
        dist: f64,
        source_kind: SourceKind,
        extent_a: f64,
        extent_b: f64,
        rotation_a_to_b: f64,
    ) -> Self {
        let (src, dst, extent, dst_extent, rotation) = if a.lex_cmp(&b) == Ordering::Greater {
            (b, a, extent_b, extent_a, -rotation_a_to_b)
        } else {
            (a, b, extent_a, extent_b, rotation_a_to_b)
        };
        Self {
            src,
            dst,
            shift: (dst.x - src.x, dst.y - src.y),
            dist,
            source_kind,
            extent,
            dst_extent,
            rotation,
        }
    }

    pub fn shift_len(&self) -> f64 {
        self.shift.0.hypot(self.shift.1)
    }

    /// Point around which the `src` neighborhood is compared.
    pub fn src_anchor(&self) -> Point {
        self.anchor(self.src, self.extent)
    }

    pub fn dst_anchor(&self) -> Point {
        self.anchor(self.dst, self.dst_extent)
    }

    fn anchor(&self, p: Point, extent: f64) -> Point {
        match self.source_kind {
            SourceKind::Block => {
                let half = (extent / 2.0).floor();
                Point::new(p.x + half, p.y + half)
            }
            SourceKind::Keypoint => p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_orders_endpoints() {
        let p = MatchPair::canonical(
            Point::new(50.0, 10.0),
            Point::new(10.0, 70.0),
            0.1,
            SourceKind::Keypoint,
            2.0,
            3.0,
            0.5,
        );
        assert_eq!(p.src, Point::new(10.0, 70.0));
        assert_eq!(p.shift, (40.0, -60.0));
        assert_eq!((p.extent, p.dst_extent, p.rotation), (3.0, 2.0, -0.5));
    }
}
