use cmfd_core::forge::{apply_forgery, base_image, gen_corpus, ForgerySpec, Scenario, SpecSidecar};
use cmfd_core::Rect;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counts pixel centers inside the rectangle `w × h` rotated by `deg` about
/// `(cx, cy)`, by projecting onto the rectangle's own axes.
fn rotated_rect_count(cx: f64, cy: f64, w: f64, h: f64, deg: f64, width: usize, height: usize) -> usize {
    let (s, c) = deg.to_radians().sin_cos();
    let mut n = 0;
    for y in 0..height {
        for x in 0..width {
            let (vx, vy) = (x as f64 - cx, y as f64 - cy);
            let (ax, ay) = (vx * c + vy * s, -vx * s + vy * c);
            if ax >= -w / 2.0 && ax < w / 2.0 && ay >= -h / 2.0 && ay < h / 2.0 {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn rotated_footprint_matches_geometric_count() {
    let img = base_image(Scenario::Plain, 320, 320, &mut ChaCha8Rng::seed_from_u64(3));
    for (w, h, dst, deg) in [(40, 30, (200, 180), 30.0), (57, 44, (150, 200), 17.3), (33, 61, (220, 40), 28.9)] {
        let spec = ForgerySpec { rotation: deg, ..ForgerySpec::translation(Rect::new(20, 30, w, h), dst) };
        let (_, mask) = apply_forgery(&img, &spec).unwrap();
        let (cx, cy) = (dst.0 as f64 + (w as f64 - 1.0) / 2.0, dst.1 as f64 + (h as f64 - 1.0) / 2.0);
        let want = rotated_rect_count(cx, cy, w as f64, h as f64, deg, 320, 320);
        assert_eq!(mask.count() - w * h, want, "{w}x{h} at {deg} degrees");
    }
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn same_seed_gives_identical_corpora() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_corpus(a.path(), 2, 2, Scenario::Mixed, 11).unwrap();
    gen_corpus(b.path(), 2, 2, Scenario::Mixed, 11).unwrap();
    let (x, y) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(x.len(), 2 * 3 + 2 + 1);
    assert_eq!(x, y);

    let c = tempfile::tempdir().unwrap();
    gen_corpus(c.path(), 2, 2, Scenario::Mixed, 12).unwrap();
    assert_ne!(x, dir_bytes(c.path()));
}

#[test]
fn authentic_only_corpus() {
    let d = tempfile::tempdir().unwrap();
    let rows = gen_corpus(d.path(), 0, 2, Scenario::Flat, 1).unwrap();
    assert!(rows.iter().all(|r| !r.tampered && r.mask_path.is_none()));
    let manifest = std::fs::read_to_string(d.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 3);
}

#[test]
fn rotated_scenario_samples_declared_range() {
    let d = tempfile::tempdir().unwrap();
    gen_corpus(d.path(), 20, 0, Scenario::Rotated, 7).unwrap();
    let mut angles = Vec::new();
    for i in 0..20 {
        let text = std::fs::read_to_string(d.path().join(format!("t_{i:04}.spec.json"))).unwrap();
        let sc: SpecSidecar = serde_json::from_str(&text).unwrap();
        assert_eq!(sc.scenario, Scenario::Rotated);
        for f in &sc.forgeries {
            assert!((10.0..=30.0).contains(&f.rotation), "rotation {}", f.rotation);
            assert_eq!(f.scale, 1.0);
            assert!(f.src_rect.w >= 48 && f.src_rect.h >= 48);
            angles.push(f.rotation);
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    assert_eq!(angles.len(), 20);
}
