//! Exact kd-tree over fixed-length descriptor vectors.
//!
//! Queries backtrack fully, so results equal a brute-force scan, including
//! tie-breaking (lower index wins among equal distances).

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf(Vec<usize>),
    Split {
        dim: usize,
        value: f32,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    points: Vec<&'a [f32]>,
    root: Option<Node>,
}

/// Squared Euclidean distance, accumulated in `f64` in index order.
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

/// `(index, squared distance)` candidates ordered by distance, then index.
fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

impl<'a> KdTree<'a> {
    /// Builds a tree over `points`; all points must share one length.
    pub fn build(points: Vec<&'a [f32]>) -> Self {
        let idx: Vec<usize> = (0..points.len()).collect();
        let root = (!points.is_empty()).then(|| Self::build_node(&points, idx));
        Self { points, root }
    }

    fn build_node(points: &[&[f32]], mut idx: Vec<usize>) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf(idx);
        }
        let dims = points[idx[0]].len();
        let (dim, spread) = (0..dims)
            .map(|d| {
                let (lo, hi) = idx.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(points[i][d]), hi.max(points[i][d]))
                });
                (d, hi - lo)
            })
            .fold((0, f32::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(spread > 0.0) {
            return Node::Leaf(idx);
        }
        idx.sort_by(|&a, &b| points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let value = points[idx[mid]][dim];
        // Points equal to the split value go right, so the left bound is strict.
        let split_at = idx.partition_point(|&i| points[i][dim] < value);
        if split_at == 0 {
            return Node::Leaf(idx);
        }
        let right = idx.split_off(split_at);
        Node::Split {
            dim,
            value,
            left: Box::new(Self::build_node(points, idx)),
            right: Box::new(Self::build_node(points, right)),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The two nearest points accepted by `keep`, as `(index, distance)`.
    pub fn nearest_two(
        &self,
        query: &[f32],
        keep: impl Fn(usize) -> bool,
    ) -> [Option<(usize, f64)>; 2] {
        let mut best: [Option<(usize, f64)>; 2] = [None, None];
        if let Some(root) = &self.root {
            self.search(root, query, &keep, &mut best);
        }
        best.map(|b| b.map(|(i, d2)| (i, d2.sqrt())))
    }

    fn worst(best: &[Option<(usize, f64)>; 2]) -> f64 {
        best[1].map_or(f64::INFINITY, |b| b.1)
    }

    fn offer(best: &mut [Option<(usize, f64)>; 2], cand: (usize, f64)) {
        match best[0] {
            None => best[0] = Some(cand),
            Some(b0) if better(cand, b0) => {
                best[1] = best[0];
                best[0] = Some(cand);
            }
            _ => match best[1] {
                Some(b1) if !better(cand, b1) => {}
                _ => best[1] = Some(cand),
            },
        }
    }

    fn search(
        &self,
        node: &Node,
        query: &[f32],
        keep: &impl Fn(usize) -> bool,
        best: &mut [Option<(usize, f64)>; 2],
    ) {
        match node {
            Node::Leaf(idx) => {
                for &i in idx {
                    if keep(i) {
                        Self::offer(best, (i, squared_distance(query, self.points[i])));
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[*dim] as f64 - *value as f64;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, keep, best);
                // Visit on equality too: a tie may carry a lower index.
                if diff * diff <= Self::worst(best) {
                    self.search(far, query, keep, best);
                }
            }
        }
    }
}

/// Reference scan used to validate the tree.
pub fn brute_force_nearest_two(
    points: &[&[f32]],
    query: &[f32],
    keep: impl Fn(usize) -> bool,
) -> [Option<(usize, f64)>; 2] {
    let mut best: [Option<(usize, f64)>; 2] = [None, None];
    for (i, p) in points.iter().enumerate() {
        if keep(i) {
            KdTree::offer(&mut best, (i, squared_distance(query, p)));
        }
    }
    best.map(|b| b.map(|(i, d2)| (i, d2.sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_tiny_trees() {
        let tree = KdTree::build(Vec::new());
        assert_eq!(tree.nearest_two(&[0.0], |_| true), [None, None]);
        let pts: Vec<Vec<f32>> = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]];
        let refs: Vec<&[f32]> = pts.iter().map(|p| p.as_slice()).collect();
        let tree = KdTree::build(refs);
        let [a, b] = tree.nearest_two(&[0.0, 0.0], |i| i != 0);
        assert_eq!(a, Some((1, 1.0)));
        assert_eq!(b, Some((2, 3.0)));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts: Vec<Vec<f32>> = (0..40).map(|i| vec![(i % 2) as f32, 0.0]).collect();
        let refs: Vec<&[f32]> = pts.iter().map(|p| p.as_slice()).collect();
        let tree = KdTree::build(refs.clone());
        let got = tree.nearest_two(&[0.0, 0.0], |_| true);
        assert_eq!(got, brute_force_nearest_two(&refs, &[0.0, 0.0], |_| true));
        assert_eq!(got[0].unwrap().0, 0);
        assert_eq!(got[1].unwrap().0, 2);
    }
}
