use cmfd_core::forge::{apply_forgery, base_image, ForgerySpec, Scenario};
use cmfd_core::hybrid::{collect_evidence, paint_cluster, Arm};
use cmfd_core::{DetectorConfig, GrayImage, Rect, SourceKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn forged(seed: u64) -> (GrayImage, cmfd_core::BinaryMask) {
    let img = base_image(Scenario::Rough, 192, 192, &mut ChaCha8Rng::seed_from_u64(seed));
    apply_forgery(&img, &ForgerySpec::translation(Rect::new(16, 20, 56, 52), (110, 120))).unwrap()
}

#[test]
fn translated_copy_is_found_and_localized() {
    let (img, truth) = forged(1);
    let cfg = DetectorConfig { t_block: 200, ..DetectorConfig::default() };
    let ev = collect_evidence(&img, &cfg).unwrap();
    let r = ev.fuse(&img, &cfg, Arm::Hybrid);
    assert!(r.tampered);
    let shift = r.clusters[0].shift;
    assert!((shift.0 - 94.0).abs() < 1.0 && (shift.1 - 100.0).abs() < 1.0, "{shift:?}");
    let hit = r.mask.bits().iter().zip(truth.bits()).filter(|(a, b)| **a && **b).count();
    assert!(hit as f64 > 0.8 * truth.count() as f64);
}

#[test]
fn block_clusters_paint_symmetric_footprints() {
    let (img, _) = forged(2);
    let cfg = DetectorConfig { t_block: 200, ..DetectorConfig::default() };
    let r = collect_evidence(&img, &cfg).unwrap().fuse(&img, &cfg, Arm::Block);
    assert!(!r.clusters.is_empty());
    for c in &r.clusters {
        let (src, dst) = paint_cluster(c, img.width(), img.height());
        assert!(c.members.iter().all(|m| m.source_kind == SourceKind::Block));
        assert_eq!(src.count(), dst.count());
        for m in &c.members {
            let (dx, dy) = (m.shift.0 as isize, m.shift.1 as isize);
            for y in 0..m.extent as isize {
                for x in 0..m.extent as isize {
                    let (sx, sy) = (m.src.x as isize + x, m.src.y as isize + y);
                    assert!(src.get(sx as usize, sy as usize));
                    assert!(dst.get((sx + dx) as usize, (sy + dy) as usize));
                }
            }
        }
    }
}

#[test]
fn stricter_thresholds_give_nested_masks() {
    let (img, _) = forged(3);
    let base = DetectorConfig { t_block: 50, ..DetectorConfig::default() };
    let ev = collect_evidence(&img, &base).unwrap();
    let mut prev = ev.fuse(&img, &base, Arm::Hybrid).mask;
    for t in [100, 400, 1600, 6400] {
        let cfg = DetectorConfig { t_block: t, t_kp: t / 25, t_mix: t / 10, ..base.clone() };
        let mask = ev.fuse(&img, &cfg, Arm::Hybrid).mask;
        assert!(mask.is_subset_of(&prev), "t_block {t}");
        prev = mask;
    }
}

#[test]
fn hybrid_mask_covers_each_single_arm_mask() {
    let (img, _) = forged(4);
    let cfg = DetectorConfig { t_block: 200, ..DetectorConfig::default() };
    let ev = collect_evidence(&img, &cfg).unwrap();
    let hybrid = ev.fuse(&img, &cfg, Arm::Hybrid);
    for arm in [Arm::Block, Arm::Keypoint] {
        let single = ev.fuse(&img, &cfg, arm);
        if single.tampered {
            assert!(hybrid.tampered);
        }
    }
}
