use cmfd_core::keypoints::kdtree::brute_force_nearest_two;
use cmfd_core::keypoints::KdTree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Isotropic unit vectors (Box-Muller normals, normalized).
fn unit_vectors(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim)
                .map(|_| {
                    let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| (x / norm) as f32).collect()
        })
        .collect()
}

#[test]
fn kdtree_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let data = unit_vectors(&mut rng, 500, 128);
    let refs: Vec<&[f32]> = data.iter().map(|v| v.as_slice()).collect();
    let tree = KdTree::build(refs.clone());
    for (i, q) in data.iter().enumerate() {
        let got = tree.nearest_two(q, |j| j != i);
        let want = brute_force_nearest_two(&refs, q, |j| j != i);
        for k in 0..2 {
            assert_eq!(got[k].map(|g| g.0), want[k].map(|w| w.0), "query {i} rank {k}");
        }
    }
}

#[test]
fn exclusion_filter_is_respected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = unit_vectors(&mut rng, 60, 16);
    let refs: Vec<&[f32]> = data.iter().map(|v| v.as_slice()).collect();
    let tree = KdTree::build(refs.clone());
    let keep = |j: usize| j % 3 != 0;
    for q in &data {
        let got = tree.nearest_two(q, keep);
        assert_eq!(got, brute_force_nearest_two(&refs, q, keep));
        assert!(got.iter().flatten().all(|(j, _)| keep(*j)));
    }
}
