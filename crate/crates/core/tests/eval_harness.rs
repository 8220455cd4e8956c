use cmfd_core::eval::{read_manifest, run_dataset, run_dataset_with, write_manifest, ManifestRow};
use cmfd_core::hybrid::{Arm, DetectionResult};
use cmfd_core::{BinaryMask, DetectorConfig, GrayImage, Rect};

fn write_dataset(dir: &std::path::Path) {
    let img = GrayImage::filled(40, 40, 0.5).unwrap();
    let mut rows = Vec::new();
    for i in 0..3 {
        let name = format!("t_{i}.png");
        img.save_png(dir.join(&name)).unwrap();
        let mut mask = BinaryMask::new(40, 40);
        mask.fill_rect(Rect::new(i * 5, 3, 10, 12));
        let mask_name = format!("t_{i}_mask.png");
        mask.save_png(dir.join(&mask_name)).unwrap();
        rows.push(ManifestRow { filename: name, tampered: true, mask_path: Some(mask_name) });
    }
    for i in 0..2 {
        let name = format!("a_{i}.png");
        img.save_png(dir.join(&name)).unwrap();
        rows.push(ManifestRow { filename: name, tampered: false, mask_path: None });
    }
    write_manifest(dir, &rows).unwrap();
}

#[test]
fn oracle_detector_scores_perfectly() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(d.path());
    let dir = d.path().to_path_buf();
    let report = run_dataset_with(d.path(), &[Arm::Hybrid], |_, row| {
        let mask = match &row.mask_path {
            Some(m) => BinaryMask::load_png(dir.join(m))?,
            None => BinaryMask::new(40, 40),
        };
        Ok(vec![DetectionResult { tampered: !mask.is_empty(), mask, clusters: Vec::new(), pairs_examined: 0 }])
    })
    .unwrap();
    let arm = report.arm(Arm::Hybrid).unwrap();
    for v in [arm.metrics.precision, arm.metrics.recall, arm.metrics.accuracy, arm.metrics.f1] {
        assert_eq!(v, 100.0);
    }
    assert_eq!(arm.pixel.metrics.as_ref().unwrap().f1, 100.0);
    assert_eq!(arm.pixel.mean_f1_true_positives, Some(100.0));
    assert_eq!(arm.errors, 0);
}

#[test]
fn missing_image_is_a_per_file_error() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(d.path());
    std::fs::remove_file(d.path().join("a_1.png")).unwrap();
    let report = run_dataset(d.path(), &DetectorConfig::default(), &[Arm::Block]).unwrap();
    let arm = report.arm(Arm::Block).unwrap();
    assert_eq!(arm.errors, 1);
    assert_eq!(arm.counts.total(), 4);
    let row = arm.rows.iter().find(|r| r.filename == "a_1.png").unwrap();
    assert!(row.verdict.is_none() && row.error.is_some());
}

#[test]
fn empty_or_absent_manifest_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    assert!(run_dataset(d.path(), &DetectorConfig::default(), &[Arm::Hybrid]).is_err());
    write_manifest(d.path(), &[]).unwrap();
    assert!(read_manifest(d.path()).unwrap().is_empty());
    assert!(run_dataset(d.path(), &DetectorConfig::default(), &[Arm::Hybrid]).is_err());
}

#[test]
fn reports_are_byte_stable() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(d.path());
    let cfg = DetectorConfig::default();
    let a = run_dataset(d.path(), &cfg, &Arm::ALL).unwrap();
    let b = run_dataset(d.path(), &cfg, &Arm::ALL).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
}
