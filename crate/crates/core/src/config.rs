//! Detector configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! block_size = 16
//! min_corr = 0.7
//! ```
//!
//! Unknown keys, malformed numbers and out-of-range values are rejected with
//! the offending key named. Keys missing from a file keep their defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::blockmatch::LexMatchParams;
use crate::error::{Error, Result};

/// Every tunable of the detection pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    // Block arm.
    pub block_size: usize,
    pub stride: usize,
    pub window: usize,
    pub quant_factor: f64,
    pub dist_threshold: f64,
    /// Minimum block-pair shift in pixels; 0 selects `2 × block_size`.
    pub block_min_shift: f64,

    // Keypoint arm.
    /// 0 selects `min(4, ⌊log2(min(w, h) / 16)⌋)`.
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma0: f64,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub match_ratio: f64,
    pub kp_min_shift: f64,

    // Filtering and fusion.
    pub patch: usize,
    pub min_corr: f64,
    pub cluster_tolerance: f64,
    pub t_block: usize,
    pub t_kp: usize,
    pub t_mix: usize,
    pub close_radius: usize,
    pub min_area: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            block_size: 16,
            stride: 1,
            window: 8,
            quant_factor: 0.1,
            dist_threshold: 0.002,
            block_min_shift: 0.0,
            octaves: 0,
            scales_per_octave: 3,
            sigma0: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            match_ratio: 0.6,
            kp_min_shift: 16.0,
            patch: 9,
            min_corr: 0.7,
            cluster_tolerance: 10.0,
            t_block: 800,
            t_kp: 4,
            t_mix: 6,
            close_radius: 2,
            min_area: 64,
        }
    }
}

/// Documentation and admissible range of one configuration key.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub help: &'static str,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
}

const fn key(name: &'static str, help: &'static str, min: f64, max: f64, integer: bool) -> KeySpec {
    KeySpec {
        name,
        help,
        min,
        max,
        integer,
    }
}

/// All keys in file order.
pub const KEYS: &[KeySpec] = &[
    key("block_size", "block side in pixels", 2.0, 256.0, true),
    key("stride", "block lattice step in pixels (<= block_size)", 1.0, 256.0, true),
    key("window", "sorted rows compared after each block", 1.0, 1024.0, true),
    key("quant_factor", "quantization step as a multiple of component std-dev", 1e-6, 100.0, false),
    key("dist_threshold", "max standardized Hu distance for a block pair", 0.0, 100.0, false),
    key("block_min_shift", "min block-pair shift in pixels (0 = 2 x block_size)", 0.0, 10000.0, false),
    key("octaves", "scale-space octaves (0 = automatic)", 0.0, 12.0, true),
    key("scales_per_octave", "DoG scales per octave", 1.0, 10.0, true),
    key("sigma0", "base scale-space blur", 0.1, 10.0, false),
    key("contrast_threshold", "min |DoG| of a keypoint", 0.0, 1.0, false),
    key("edge_ratio", "principal-curvature ratio limit", 1.0, 100.0, false),
    key("match_ratio", "nearest / second-nearest descriptor distance limit", 0.0, 1.0, false),
    key("kp_min_shift", "min keypoint-pair shift in pixels", 0.0, 10000.0, false),
    key("patch", "intensity-filter patch side (odd)", 3.0, 63.0, true),
    key("min_corr", "min zero-normalized cross-correlation", -1.0, 1.0, false),
    key("cluster_tolerance", "shift clustering tolerance (L-inf, pixels)", 0.0, 1000.0, false),
    key("t_block", "block pairs needed to accept a cluster", 1.0, 1e9, true),
    key("t_kp", "keypoint pairs needed to accept a cluster", 1.0, 1e9, true),
    key("t_mix", "pairs needed when both arms contribute", 2.0, 1e9, true),
    key("close_radius", "mask closing radius in pixels", 0.0, 64.0, true),
    key("min_area", "smallest kept mask component in pixels", 0.0, 1e9, true),
];

impl DetectorConfig {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "block_size" => self.block_size as f64,
            "stride" => self.stride as f64,
            "window" => self.window as f64,
            "quant_factor" => self.quant_factor,
            "dist_threshold" => self.dist_threshold,
            "block_min_shift" => self.block_min_shift,
            "octaves" => self.octaves as f64,
            "scales_per_octave" => self.scales_per_octave as f64,
            "sigma0" => self.sigma0,
            "contrast_threshold" => self.contrast_threshold,
            "edge_ratio" => self.edge_ratio,
            "match_ratio" => self.match_ratio,
            "kp_min_shift" => self.kp_min_shift,
            "patch" => self.patch as f64,
            "min_corr" => self.min_corr,
            "cluster_tolerance" => self.cluster_tolerance,
            "t_block" => self.t_block as f64,
            "t_kp" => self.t_kp as f64,
            "t_mix" => self.t_mix as f64,
            "close_radius" => self.close_radius as f64,
            "min_area" => self.min_area as f64,
            _ => return None,
        })
    }

    /// Parses `raw` and assigns it to `name`, enforcing the key's range.
    pub fn set(&mut self, name: &str, raw: &str) -> Result<()> {
        let spec = KEYS.iter().find(|k| k.name == name).ok_or_else(|| Error::Config {
            key: name.to_string(),
            message: "unknown key".into(),
        })?;
        let bad = |message: String| Error::Config {
            key: name.to_string(),
            message,
        };
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a decimal number", raw.trim())))?;
        if !v.is_finite() || v < spec.min || v > spec.max {
            return Err(bad(format!("{v} outside [{}, {}]", spec.min, spec.max)));
        }
        if spec.integer && v.fract() != 0.0 {
            return Err(bad(format!("{v} is not an integer")));
        }
        let n = v as usize;
        match name {
            "block_size" => self.block_size = n,
            "stride" => self.stride = n,
            "window" => self.window = n,
            "quant_factor" => self.quant_factor = v,
            "dist_threshold" => self.dist_threshold = v,
            "block_min_shift" => self.block_min_shift = v,
            "octaves" => self.octaves = n,
            "scales_per_octave" => self.scales_per_octave = n,
            "sigma0" => self.sigma0 = v,
            "contrast_threshold" => self.contrast_threshold = v,
            "edge_ratio" => self.edge_ratio = v,
            "match_ratio" => self.match_ratio = v,
            "kp_min_shift" => self.kp_min_shift = v,
            "patch" => self.patch = n,
            "min_corr" => self.min_corr = v,
            "cluster_tolerance" => self.cluster_tolerance = v,
            "t_block" => self.t_block = n,
            "t_kp" => self.t_kp = n,
            "t_mix" => self.t_mix = n,
            "close_radius" => self.close_radius = n,
            "min_area" => self.min_area = n,
            _ => unreachable!("key table and setter disagree on `{name}`"),
        }
        Ok(())
    }

    /// Cross-key constraints that single-key ranges cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.stride > self.block_size {
            return Err(Error::Config {
                key: "stride".into(),
                message: format!("{} exceeds block_size {}", self.stride, self.block_size),
            });
        }
        if self.patch % 2 == 0 {
            return Err(Error::Config {
                key: "patch".into(),
                message: format!("{} is not odd", self.patch),
            });
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: format!("line {} is not `key = value`", lineno + 1),
            })?;
            self.set(k.trim(), v)?;
        }
        self.validate()
    }

    pub fn from_str_with_defaults(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_with_defaults(&text)
    }

    /// Every key with its current value, one per line.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let v = self.get(k.name).expect("every listed key is readable");
            let _ = writeln!(out, "{} = {}", k.name, v);
        }
        out
    }

    pub fn effective_block_min_shift(&self) -> f64 {
        if self.block_min_shift > 0.0 {
            self.block_min_shift
        } else {
            2.0 * self.block_size as f64
        }
    }

    pub fn lex_params(&self) -> LexMatchParams {
        LexMatchParams {
            quantization: self.quant_factor,
            window: self.window,
            min_shift: self.effective_block_min_shift(),
            dist_threshold: self.dist_threshold,
        }
    }
}

/// Help text listing every key with default and range.
pub fn keys_help() -> String {
    let defaults = DetectorConfig::default();
    let mut out = String::from("Config keys (file: `key = value`):\n");
    for k in KEYS {
        let _ = writeln!(
            out,
            "  {:<20} default {:<6} range [{}, {}]  {}",
            k.name,
            defaults.get(k.name).unwrap_or_default(),
            k.min,
            k.max,
            k.help
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let mut cfg = DetectorConfig::default();
        cfg.set("min_corr", "0.55").unwrap();
        cfg.set("block_size", "8").unwrap();
        let parsed = DetectorConfig::from_str_with_defaults(&cfg.to_file_string()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = DetectorConfig::from_str_with_defaults("# hi\n\n t_kp = 5 # inline\n").unwrap();
        assert_eq!(cfg.t_kp, 5);
    }

    #[test]
    fn errors_name_the_key() {
        let err = DetectorConfig::from_str_with_defaults("bogus = 1").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = DetectorConfig::from_str_with_defaults("match_ratio = 1.5").unwrap_err();
        assert!(err.to_string().contains("match_ratio"));
        let err = DetectorConfig::from_str_with_defaults("window = 2.5").unwrap_err();
        assert!(err.to_string().contains("window"));
        let err = DetectorConfig::from_str_with_defaults("patch = 8").unwrap_err();
        assert!(err.to_string().contains("patch"));
        let err = DetectorConfig::from_str_with_defaults("stride = 20").unwrap_err();
        assert!(err.to_string().contains("stride"));
        let err = DetectorConfig::from_str_with_defaults("min_area = x").unwrap_err();
        assert!(err.to_string().contains("min_area"));
    }

    #[test]
    fn auto_min_shift() {
        let mut cfg = DetectorConfig::default();
        assert_eq!(cfg.effective_block_min_shift(), 32.0);
        cfg.block_size = 8;
        assert_eq!(cfg.effective_block_min_shift(), 16.0);
        cfg.block_min_shift = 40.0;
        assert_eq!(cfg.effective_block_min_shift(), 40.0);
    }

    #[test]
    fn help_lists_every_key() {
        let help = keys_help();
        for k in KEYS {
            assert!(help.contains(k.name));
        }
    }
}
