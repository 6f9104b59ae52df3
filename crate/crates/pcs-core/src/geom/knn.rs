//! Exact k-nearest-neighbor queries over an immutable cloud snapshot.
//!
//! Results match a brute-force scan bit for bit: candidates are ordered by
//! `(distance, index)`, so equal distances break toward the lower index on
//! every platform.

use super::{dist_sq, Point3, PointCloud};
use crate::error::{Error, Result};

/// kd-tree over a snapshot of a cloud's points.
///
/// Immutable after build; queries are safe to run concurrently.
pub struct KnnIndex {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: i32,
}

struct Node {
    point_index: u32,
    axis: u8,
    left: i32,
    right: i32,
}

const NONE: i32 = -1;

impl KnnIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points().to_vec())
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_recursive(&points, &mut order, &mut nodes);
        KnnIndex {
            points,
            nodes,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    /// The `k` nearest indexed points to `query`, as `(index, distance)`
    /// pairs sorted by nondecreasing distance (ties toward lower index).
    pub fn knn(&self, query: Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k > self.points.len() {
            return Err(Error::KTooLarge {
                k,
                size: self.points.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut best = BoundedBest::new(k);
        self.search(self.root, query, &mut best);
        Ok(best
            .into_sorted()
            .into_iter()
            .map(|(d, i)| (i as usize, d.sqrt()))
            .collect())
    }

    /// Nearest indexed point: `(index, squared distance)`.
    pub fn nearest_sq(&self, query: Point3) -> (usize, f64) {
        let mut best = BoundedBest::new(1);
        self.search(self.root, query, &mut best);
        let (d, i) = best.into_sorted()[0];
        (i as usize, d)
    }

    fn search(&self, node: i32, query: Point3, best: &mut BoundedBest) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point_index as usize];
        best.offer(dist_sq(p, query), n.point_index);

        let delta = axis_coord(query, n.axis) - axis_coord(p, n.axis);
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, best);
        // <= keeps ties exact: an equidistant point across the splitting
        // plane may still win on the index tie-break.
        if !best.full() || delta * delta <= best.worst_dist() {
            self.search(far, query, best);
        }
    }
}

fn axis_coord(p: Point3, axis: u8) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn build_recursive(points: &[Point3], order: &mut [u32], nodes: &mut Vec<Node>) -> i32 {
    if order.is_empty() {
        return NONE;
    }
    // split on the widest axis for balanced cells on anisotropic data
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = points[i as usize];
        for (a, &c) in [p.x, p.y, p.z].iter().enumerate() {
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap() as u8;

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        axis_coord(points[a as usize], axis)
            .total_cmp(&axis_coord(points[b as usize], axis))
            .then(a.cmp(&b))
    });
    let point_index = order[mid];

    let node_slot = nodes.len() as i32;
    nodes.push(Node {
        point_index,
        axis,
        left: NONE,
        right: NONE,
    });
    let (left_half, rest) = order.split_at_mut(mid);
    let left = build_recursive(points, left_half, nodes);
    let right = build_recursive(points, &mut rest[1..], nodes);
    nodes[node_slot as usize].left = left;
    nodes[node_slot as usize].right = right;
    node_slot
}

/// Keeps the k smallest `(distance, index)` pairs in lexicographic order.
struct BoundedBest {
    k: usize,
    // binary max-heap over (dist, index)
    heap: Vec<(f64, u32)>,
}

impl BoundedBest {
    fn new(k: usize) -> Self {
        BoundedBest {
            k,
            heap: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.heap.len() == self.k
    }

    fn worst_dist(&self) -> f64 {
        self.heap[0].0
    }

    fn offer(&mut self, d: f64, i: u32) {
        if self.heap.len() < self.k {
            self.heap.push((d, i));
            self.sift_up(self.heap.len() - 1);
        } else if (d, i) < self.heap[0] {
            self.heap[0] = (d, i);
            self.sift_down(0);
        }
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.heap[i] > self.heap[parent] {
                self.heap.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut largest = i;
            if l < self.heap.len() && self.heap[l] > self.heap[largest] {
                largest = l;
            }
            if r < self.heap.len() && self.heap[r] > self.heap[largest] {
                largest = r;
            }
            if largest == i {
                break;
            }
            self.heap.swap(i, largest);
            i = largest;
        }
    }

    fn into_sorted(self) -> Vec<(f64, u32)> {
        let mut v = self.heap;
        v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// Brute-force reference: full scan sorted by `(distance, index)`.
pub fn knn_brute_force(points: &[Point3], query: Point3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (dist_sq(p, query), i))
        .collect();
    all.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    all.truncate(k);
    all.into_iter().map(|(d, i)| (i, d.sqrt())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = Rng::from_seed(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.range_f64(-1.0, 1.0),
                        rng.range_f64(-1.0, 1.0),
                        rng.range_f64(-1.0, 1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn self_query_returns_self() {
        let cloud = random_cloud(64, 5);
        let index = KnnIndex::build(&cloud);
        let hits = index.knn(cloud.points()[17], 1).unwrap();
        assert_eq!(hits[0].0, 17);
        assert_eq!(hits[0].1, 0.0);
    }

    #[test]
    fn collinear_grid_query() {
        // points at x = 0,1,2,3; query 1.4 -> x=1 then x=2
        let cloud = PointCloud::new(
            (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect(),
        )
        .unwrap();
        let index = KnnIndex::build(&cloud);
        let hits = index.knn(Point3::new(1.4, 0.0, 0.0), 2).unwrap();
        assert_eq!(hits[0].0, 1);
        assert_eq!(hits[1].0, 2);
    }

    #[test]
    fn k_equals_cloud_size_is_a_permutation() {
        let cloud = random_cloud(100, 9);
        let index = KnnIndex::build(&cloud);
        let hits = index.knn(Point3::new(0.3, -0.2, 0.9), 100).unwrap();
        let mut seen: Vec<usize> = hits.iter().map(|h| h.0).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
        for w in hits.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn k_too_large_errors() {
        let cloud = random_cloud(10, 2);
        let index = KnnIndex::build(&cloud);
        assert_eq!(index.knn(Point3::ORIGIN, 11).unwrap_err().code(), "k-too-large");
    }

    #[test]
    fn ties_break_toward_lower_index() {
        // two points equidistant from the query
        let cloud = PointCloud::new(vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 5.0, 0.0),
        ])
        .unwrap();
        let index = KnnIndex::build(&cloud);
        let hits = index.knn(Point3::ORIGIN, 1).unwrap();
        assert_eq!(hits[0].0, 0);
    }

    #[test]
    fn agrees_with_brute_force_on_random_clouds() {
        // includes duplicated points to exercise tie handling
        for trial in 0..100u64 {
            let mut rng = Rng::from_seed(1000 + trial);
            let n = 1 + rng.index(2000);
            let mut points: Vec<Point3> = (0..n)
                .map(|_| {
                    Point3::new(
                        (rng.index(20) as f64) * 0.1,
                        (rng.index(20) as f64) * 0.1,
                        (rng.index(20) as f64) * 0.1,
                    )
                })
                .collect();
            if n > 10 {
                for i in 0..n / 10 {
                    points[i] = points[n - 1 - i]; // duplicates
                }
            }
            let cloud = PointCloud::new(points).unwrap();
            let index = KnnIndex::build(&cloud);
            let k = 1 + rng.index(n.min(30));
            let query = Point3::new(
                rng.range_f64(-0.5, 2.5),
                rng.range_f64(-0.5, 2.5),
                rng.range_f64(-0.5, 2.5),
            );
            let fast = index.knn(query, k).unwrap();
            let slow = knn_brute_force(cloud.points(), query, k);
            assert_eq!(fast, slow, "trial {trial} n={n} k={k}");
        }
    }
}
