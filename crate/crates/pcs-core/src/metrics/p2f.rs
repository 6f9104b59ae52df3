//! Exact point-to-triangle distance with a small BVH over the mesh.

use crate::error::{Error, Result};
use crate::geom::{dist_sq, Point3, PointCloud};
use crate::io::TriangleMesh;

/// Closest point on a triangle, handling the interior, edge, and vertex
/// regions.
pub fn closest_point_on_triangle(p: Point3, tri: [Point3; 3]) -> Point3 {
    let [a, b, c] = tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_dist_sq(p: Point3, tri: [Point3; 3]) -> f64 {
    dist_sq(p, closest_point_on_triangle(p, tri))
}

#[derive(Clone, Copy)]
struct Aabb {
    min: Point3,
    max: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: Point3) {
        self.min = Point3::new(self.min.x.min(p.x), self.min.y.min(p.y), self.min.z.min(p.z));
        self.max = Point3::new(self.max.x.max(p.x), self.max.y.max(p.y), self.max.z.max(p.z));
    }

    fn dist_sq(&self, p: Point3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        dx * dx + dy * dy + dz * dz
    }
}

struct BvhNode {
    bounds: Aabb,
    // leaf: range into `order`; inner: child node ids
    left: i32,
    right: i32,
    start: u32,
    count: u32,
}

/// Nearest-triangle queries over one mesh. Pruning uses conservative box
/// bounds only, so results equal a brute-force scan exactly.
pub struct TriangleBvh<'m> {
    mesh: &'m TriangleMesh,
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
    root: i32,
}

const LEAF_SIZE: usize = 4;

impl<'m> TriangleBvh<'m> {
    pub fn build(mesh: &'m TriangleMesh) -> Self {
        let centroids: Vec<Point3> = (0..mesh.triangles().len())
            .map(|i| {
                let [a, b, c] = mesh.triangle_points(i);
                (a + b + c) * (1.0 / 3.0)
            })
            .collect();
        let mut order: Vec<u32> = (0..mesh.triangles().len() as u32).collect();
        let mut nodes = Vec::new();
        let root = build_node(mesh, &centroids, &mut order, 0, &mut nodes);
        TriangleBvh {
            mesh,
            nodes,
            order,
            root,
        }
    }

    /// Squared distance to the nearest triangle.
    pub fn nearest_sq(&self, p: Point3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(self.root, p, &mut best);
        best
    }

    fn search(&self, node: i32, p: Point3, best: &mut f64) {
        let n = &self.nodes[node as usize];
        if n.count > 0 {
            for &ti in &self.order[n.start as usize..(n.start + n.count) as usize] {
                let d = point_triangle_dist_sq(p, self.mesh.triangle_points(ti as usize));
                if d < *best {
                    *best = d;
                }
            }
            return;
        }
        let dl = self.nodes[n.left as usize].bounds.dist_sq(p);
        let dr = self.nodes[n.right as usize].bounds.dist_sq(p);
        let (first, d_first, second, d_second) = if dl <= dr {
            (n.left, dl, n.right, dr)
        } else {
            (n.right, dr, n.left, dl)
        };
        if d_first < *best {
            self.search(first, p, best);
        }
        if d_second < *best {
            self.search(second, p, best);
        }
    }
}

fn build_node(
    mesh: &TriangleMesh,
    centroids: &[Point3],
    order: &mut [u32],
    offset: usize,
    nodes: &mut Vec<BvhNode>,
) -> i32 {
    let mut bounds = Aabb::empty();
    for &ti in order.iter() {
        for v in mesh.triangle_points(ti as usize) {
            bounds.grow(v);
        }
    }
    let id = nodes.len() as i32;
    if order.len() <= LEAF_SIZE {
        nodes.push(BvhNode {
            bounds,
            left: -1,
            right: -1,
            start: offset as u32,
            count: order.len() as u32,
        });
        return id;
    }

    let extent = bounds.max - bounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let coord = |i: u32| -> f64 {
        let c = centroids[i as usize];
        match axis {
            0 => c.x,
            1 => c.y,
            _ => c.z,
        }
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| coord(a).total_cmp(&coord(b)).then(a.cmp(&b)));

    nodes.push(BvhNode {
        bounds,
        left: -1,
        right: -1,
        start: 0,
        count: 0,
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(mesh, centroids, lo, offset, nodes);
    let right = build_node(mesh, centroids, hi, offset + mid, nodes);
    nodes[id as usize].left = left;
    nodes[id as usize].right = right;
    id
}

/// Mean (unsquared) distance from each point to the nearest face of the mesh.
pub fn point_to_face(points: &PointCloud, mesh: &TriangleMesh) -> Result<f64> {
    if mesh.triangles().is_empty() {
        return Err(Error::InvalidInput("mesh has no triangles".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no query points".into()));
    }
    let bvh = TriangleBvh::build(mesh);
    let sum: f64 = points
        .points()
        .iter()
        .map(|&p| bvh.nearest_sq(p).sqrt())
        .sum();
    Ok(sum / points.len() as f64)
}
