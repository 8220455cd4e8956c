//! Confusion counts, precision / recall / accuracy / F1, and a dataset runner
//! over a `manifest.csv` directory layout.
//!
//! Layout: `<dir>/manifest.csv` with header `filename,tampered,mask_path`,
//! where `tampered` is `0` or `1` and `mask_path` may be empty. Paths are
//! relative to `<dir>`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::DetectorConfig;
use crate::error::{Error, Result};
use crate::hybrid::{collect_evidence, Arm, DetectionResult};
use crate::imagekit::{load_image, BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// Percentages in `[0, 100]`. Metrics whose denominator was zero are
/// reported as 0 and named in `undefined`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MetricSet {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<&'static str>,
}

impl MetricSet {
    /// Values rounded to two decimals, as reported.
    pub fn rounded(&self) -> MetricSet {
        MetricSet {
            precision: round2(self.precision),
            recall: round2(self.recall),
            accuracy: round2(self.accuracy),
            f1: round2(self.f1),
            undefined: self.undefined.clone(),
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Harmonic mean `2PR / (P + R)`; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn image_confusion(verdicts: &[(bool, bool)]) -> Result<ConfusionCounts> {
    if verdicts.is_empty() {
        return Err(Error::invalid("no verdicts to count"));
    }
    let mut c = ConfusionCounts::default();
    for &(predicted, truth) in verdicts {
        c.add(predicted, truth);
    }
    Ok(c)
}

pub fn pixel_confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    pred.check_same_size(truth)?;
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.bits().iter().zip(truth.bits()) {
        c.add(*p, *t);
    }
    Ok(c)
}

pub fn metrics(c: &ConfusionCounts) -> Result<MetricSet> {
    if c.total() == 0 {
        return Err(Error::invalid("metrics of zero evaluated units"));
    }
    let mut undefined = Vec::new();
    let mut ratio = |num: u64, den: u64, name: &'static str| {
        if den == 0 {
            log::debug!("{name} undefined (0/0); reported as 0");
            undefined.push(name);
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp, "precision");
    let recall = ratio(c.tp, c.tp + c.fn_, "recall");
    let accuracy = ratio(c.tp + c.tn, c.total(), "accuracy");
    if precision + recall == 0.0 {
        undefined.push("f1");
    }
    Ok(MetricSet {
        precision,
        recall,
        accuracy,
        f1: f1_score(precision, recall),
        undefined,
    })
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub filename: String,
    pub tampered: bool,
    pub mask_path: Option<String>,
}

#[derive(serde::Deserialize)]
struct RawRow {
    filename: String,
    tampered: String,
    #[serde(default)]
    mask_path: Option<String>,
}

/// Reads `<dir>/manifest.csv`, sorted by filename.
pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = dir.join("manifest.csv");
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for rec in reader.deserialize::<RawRow>() {
        let raw = rec?;
        let tampered = match raw.tampered.as_str() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Manifest(format!(
                    "{}: tampered must be 0 or 1, got `{other}`",
                    raw.filename
                )))
            }
        };
        rows.push(ManifestRow {
            filename: raw.filename,
            tampered,
            mask_path: raw.mask_path.filter(|m| !m.is_empty()),
        });
    }
    rows.sort_by(|a, b| a.filename.cmp(&b.filename));
    Ok(rows)
}

pub fn write_manifest(dir: &Path, rows: &[ManifestRow]) -> Result<()> {
    let path = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["filename", "tampered", "mask_path"])?;
    for r in rows {
        w.write_record([
            r.filename.as_str(),
            if r.tampered { "1" } else { "0" },
            r.mask_path.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Per-image outcome for one arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageRow {
    pub filename: String,
    pub truth: bool,
    /// `None` when the image could not be processed.
    pub verdict: Option<bool>,
    /// Pixel F1 in percent, for tampered images with a truth mask.
    pub pixel_f1: Option<f64>,
    #[serde(skip)]
    pub pixel_counts: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PixelSummary {
    /// Images contributing pixel scores.
    pub images: usize,
    /// Counts summed over those images.
    pub counts: ConfusionCounts,
    pub metrics: Option<MetricSet>,
    pub mean_f1: Option<f64>,
    /// Mean pixel F1 over image-level true positives only.
    pub mean_f1_true_positives: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmReport {
    pub arm: Arm,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
    pub pixel: PixelSummary,
    pub errors: usize,
    pub rows: Vec<ImageRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub images: usize,
    pub arms: Vec<ArmReport>,
}

impl Report {
    pub fn arm(&self, arm: Arm) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One line per arm and image: `arm,filename,verdict,truth,pixel_f1`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["arm", "filename", "verdict", "truth", "pixel_f1"])?;
        for arm in &self.arms {
            for r in &arm.rows {
                let verdict = match r.verdict {
                    Some(true) => "1",
                    Some(false) => "0",
                    None => "error",
                };
                let pf = r.pixel_f1.map(|v| format!("{v:.2}")).unwrap_or_default();
                w.write_record([arm.arm.name(), &r.filename, verdict, if r.truth { "1" } else { "0" }, &pf])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Precision, Recall, Accuracy, F1 per arm, as a text table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<10} {:>9} {:>9} {:>9} {:>9}\n", "Method", "Precision", "Recall", "Accuracy", "F1");
        for a in &self.arms {
            let m = &a.metrics;
            let _ = writeln!(
                out,
                "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
                a.arm.name(),
                m.precision,
                m.recall,
                m.accuracy,
                m.f1
            );
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()?).map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))?;
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| round2(sum / n as f64))
}

/// Outcome of one image under every requested arm, in arm order.
type ImageOutcome = std::result::Result<Vec<DetectionResult>, String>;

/// Runs `detector` over every manifest image and aggregates per arm.
///
/// `detector` returns one result per entry of `arms`. Images that fail to
/// load or detect are reported as per-file errors and left out of the counts.
pub fn run_dataset_with<F>(dir: &Path, arms: &[Arm], detector: F) -> Result<Report>
where
    F: Fn(&GrayImage, &ManifestRow) -> Result<Vec<DetectionResult>> + Sync,
{
    let manifest = read_manifest(dir)?;
    if manifest.is_empty() {
        return Err(Error::Manifest(format!("{} lists no images", dir.join("manifest.csv").display())));
    }
    let outcomes: Vec<(ImageOutcome, Option<BinaryMask>)> = manifest
        .par_iter()
        .map(|row| {
            let truth_mask = row
                .mask_path
                .as_ref()
                .and_then(|m| BinaryMask::load_png(dir.join(m)).ok());
            let outcome = load_image(dir.join(&row.filename))
                .and_then(|img| detector(&img, row))
                .map_err(|e| e.to_string());
            (outcome, truth_mask)
        })
        .collect();

    let mut reports = Vec::with_capacity(arms.len());
    for (k, &arm) in arms.iter().enumerate() {
        let mut counts = ConfusionCounts::default();
        let mut rows = Vec::with_capacity(manifest.len());
        for (row, (outcome, truth_mask)) in manifest.iter().zip(&outcomes) {
            let mut image_row = ImageRow {
                filename: row.filename.clone(),
                truth: row.tampered,
                verdict: None,
                pixel_f1: None,
                pixel_counts: None,
                error: None,
            };
            match outcome {
                Err(e) => image_row.error = Some(e.clone()),
                Ok(results) => {
                    let r = &results[k];
                    image_row.verdict = Some(r.tampered);
                    counts.add(r.tampered, row.tampered);
                    if let (true, Some(truth)) = (row.tampered, truth_mask) {
                        match pixel_confusion(&r.mask, truth) {
                            Ok(pc) => {
                                let m = metrics(&pc)?;
                                image_row.pixel_f1 = Some(round2(m.f1));
                                image_row.pixel_counts = Some(pc);
                            }
                            Err(e) => image_row.error = Some(e.to_string()),
                        }
                    }
                }
            }
            rows.push(image_row);
        }
        let scored: Vec<&ImageRow> = rows.iter().filter(|r| r.pixel_counts.is_some()).collect();
        let mut pixel_counts = ConfusionCounts::default();
        for r in &scored {
            pixel_counts += r.pixel_counts.expect("filtered on presence");
        }
        let pixel = PixelSummary {
            images: scored.len(),
            counts: pixel_counts,
            metrics: if scored.is_empty() { None } else { Some(metrics(&pixel_counts)?.rounded()) },
            mean_f1: mean(scored.iter().filter_map(|r| r.pixel_f1)),
            mean_f1_true_positives: mean(
                scored
                    .iter()
                    .filter(|r| r.verdict == Some(true))
                    .filter_map(|r| r.pixel_f1),
            ),
        };
        let errors = rows.iter().filter(|r| r.verdict.is_none()).count();
        let metric_set = if counts.total() == 0 {
            MetricSet::default()
        } else {
            metrics(&counts)?.rounded()
        };
        reports.push(ArmReport {
            arm,
            counts,
            metrics: metric_set,
            pixel,
            errors,
            rows,
        });
    }
    Ok(Report {
        images: manifest.len(),
        arms: reports,
    })
}

/// Detects every image in `dir` with the real pipeline, once per image, and
/// scores each requested arm.
pub fn run_dataset(dir: &Path, cfg: &DetectorConfig, arms: &[Arm]) -> Result<Report> {
    run_dataset_with(dir, arms, |img, _| {
        let evidence = collect_evidence(img, cfg)?;
        Ok(arms.iter().map(|&a| evidence.fuse(img, cfg, a)).collect())
    })
}

/// Paths of the JSON and CSV reports for a report base path.
pub fn report_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("json"), base.with_extension("csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_confusion_examples() {
        let c = image_confusion(&[(true, true), (false, false)]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (1, 1, 0, 0));
        let c = image_confusion(&[(true, false)]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (0, 0, 1, 0));
        let c = image_confusion(&[(false, true), (true, true)]).unwrap();
        assert_eq!((c.tp, c.fn_), (1, 1));
        assert!(image_confusion(&[]).is_err());
    }

    #[test]
    fn pixel_confusion_examples() {
        let mut truth = BinaryMask::new(4, 4);
        truth.set(1, 1, true);
        truth.set(2, 1, true);
        let c = pixel_confusion(&truth, &truth).unwrap();
        assert_eq!((c.tp, c.tn), (2, 14));
        let c = pixel_confusion(&BinaryMask::new(4, 4), &truth).unwrap();
        assert_eq!(c.fn_, 2);
        let inverse = BinaryMask::from_bits(4, 4, truth.bits().iter().map(|b| !b).collect()).unwrap();
        let c = pixel_confusion(&inverse, &truth).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert!(pixel_confusion(&BinaryMask::new(3, 4), &truth).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionCounts { tp: 5, fp: 0, fn_: 0, tn: 5 }).unwrap();
        assert_eq!((m.precision, m.recall, m.accuracy, m.f1), (100.0, 100.0, 100.0, 100.0));
        assert!(m.undefined.is_empty());

        let m = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 3, tn: 7 }).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        assert!((m.accuracy - 70.0).abs() < 1e-12);
        assert!(m.undefined.contains(&"precision"));

        assert!(metrics(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn f1_of_reported_hybrid_row() {
        assert!((f1_score(97.68, 96.04) - 96.85).abs() <= 0.01);
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_dataset(dir.path(), &DetectorConfig::default(), &[Arm::Hybrid]),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn manifest_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            ManifestRow { filename: "b.png".into(), tampered: true, mask_path: Some("b_mask.png".into()) },
            ManifestRow { filename: "a.png".into(), tampered: false, mask_path: None },
        ];
        write_manifest(dir.path(), &rows).unwrap();
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back[0], rows[1]);
        assert_eq!(back[1], rows[0]);
    }

    #[test]
    fn bad_tampered_flag() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("manifest.csv"), "filename,tampered,mask_path\nx.png,yes,\n").unwrap();
        assert!(matches!(read_manifest(dir.path()), Err(Error::Manifest(_))));
    }
}
