//! Copy-move (region duplication) forgery detection.
//!
//! Two evidence arms look for duplicated content inside one image:
//!
//! * [`blockmatch`]: Hu moment invariants of overlapping square blocks,
//!   matched by lexicographic sorting. Strong on smooth regions and exact
//!   copies.
//! * [`keypoints`]: difference-of-Gaussian keypoints with gradient-histogram
//!   descriptors, matched through a kd-tree. Strong on textured regions and
//!   rotated or scaled pastes.
//!
//! [`hybrid`] filters both arms' pairs against local intensities, clusters
//! them by shift vector and paints accepted clusters into a tamper mask.
//! [`eval`] scores detections against a labelled dataset and [`forge`]
//! generates one.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockmatch;
pub mod config;
pub mod error;
pub mod eval;
pub mod forge;
pub mod hybrid;
pub mod imagekit;
pub mod keypoints;
pub mod moments;
pub mod pair;

pub use config::DetectorConfig;
pub use error::{Error, Result};
pub use hybrid::{detect, Arm, DetectionResult, ShiftCluster};
pub use imagekit::{load_image, BinaryMask, GrayImage, Rect};
pub use moments::{HuVector, MomentSet};
pub use pair::{MatchPair, Point, SourceKind};
