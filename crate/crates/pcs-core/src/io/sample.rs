//! Dense point sampling of a mesh surface.

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Rng};

/// Draws `count` points on the surface: a triangle is chosen with
/// probability proportional to its area, then a position is drawn with
/// uniform barycentric coordinates `u = 1 - sqrt(r1)`, `v = sqrt(r1) * r2`.
pub fn sample_mesh_surface(
    mesh: &TriangleMesh,
    count: usize,
    rng: &mut Rng,
) -> Result<PointCloud> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0f64;
    for i in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle_points(i);
        total += 0.5 * (b - a).cross(c - a).norm();
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::DegenerateMesh);
    }

    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.f64() * total;
        let ti = cumulative.partition_point(|&acc| acc <= target);
        let ti = ti.min(mesh.triangles().len() - 1);
        let [a, b, c] = mesh.triangle_points(ti);
        let r1 = rng.f64();
        let r2 = rng.f64();
        let sqrt_r1 = r1.sqrt();
        let u = 1.0 - sqrt_r1;
        let v = sqrt_r1 * r2;
        let w = 1.0 - u - v;
        points.push(a * u + b * v + c * w);
    }
    PointCloud::new(points)
}
