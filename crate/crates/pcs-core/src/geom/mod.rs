//! Foundational geometry: points, clouds, nearest-neighbor queries, plane
//! fitting, farthest-point sampling, Poisson-disk seeding, normalization.

mod fps;
mod knn;
mod plane;
mod poisson;
mod rng;

pub use fps::{farthest_point_sampling, farthest_point_sampling_from};
pub use knn::{knn_brute_force, KnnIndex};
pub use plane::{fit_plane, plane_residual, point_plane_distance, FittedPlane};
pub use poisson::{poisson_disk_seeds, poisson_disk_seeds_with_radius};
pub use rng::Rng;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A 3D point (or vector; the same type serves both roles).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn normalized(self) -> Point3 {
        let n = self.norm();
        Point3::new(self.x / n, self.y / n, self.z / n)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Squared Euclidean distance. Every distance comparison in the crate goes
/// through this one function so that spatial indexes and brute-force scans
/// produce bit-identical values.
#[inline]
pub fn dist_sq(a: Point3, b: Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// An ordered list of 3D points with optional per-point saliency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3>,
    saliency: Option<Vec<f64>>,
}

impl PointCloud {
    /// Builds a cloud, validating that it is nonempty and finite.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("point {i} of cloud"),
            });
        }
        Ok(PointCloud {
            points,
            saliency: None,
        })
    }

    pub fn with_saliency(points: Vec<Point3>, saliency: Vec<f64>) -> Result<Self> {
        let mut cloud = PointCloud::new(points)?;
        cloud.set_saliency(saliency)?;
        Ok(cloud)
    }

    pub fn set_saliency(&mut self, saliency: Vec<f64>) -> Result<()> {
        if saliency.len() != self.points.len() {
            return Err(Error::InvalidInput(format!(
                "saliency length {} does not match cloud size {}",
                saliency.len(),
                self.points.len()
            )));
        }
        if let Some(i) = saliency.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput(format!(
                "saliency value at {i} is negative or non-finite"
            )));
        }
        self.saliency = Some(saliency);
        Ok(())
    }

    pub fn clear_saliency(&mut self) {
        self.saliency = None;
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn saliency(&self) -> Option<&[f64]> {
        self.saliency.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = Point3::ORIGIN;
        for p in &self.points {
            c = c + *p;
        }
        c * (1.0 / self.points.len() as f64)
    }

    /// Radius of the bounding sphere centered at the centroid.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.points
            .iter()
            .map(|p| dist_sq(*p, c))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Selects a subset by index, carrying saliency along. Indices may repeat.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let points: Vec<Point3> = indices.iter().map(|&i| self.points[i]).collect();
        match &self.saliency {
            Some(s) => {
                PointCloud::with_saliency(points, indices.iter().map(|&i| s[i]).collect())
            }
            None => PointCloud::new(points),
        }
    }
}

/// Recenters a cloud on its centroid and scales it into the unit sphere.
///
/// Returns the normalized cloud together with `(center, radius)` so the
/// transform can be inverted by [`denormalize`].
pub fn normalize_to_unit_sphere(cloud: &PointCloud) -> Result<(PointCloud, Point3, f64)> {
    let center = cloud.centroid();
    let radius = cloud.bounding_radius();
    if radius <= 0.0 {
        return Err(Error::DegenerateExtent);
    }
    let inv = 1.0 / radius;
    let points = cloud.points().iter().map(|&p| (p - center) * inv).collect();
    let normalized = match cloud.saliency() {
        Some(s) => PointCloud::with_saliency(points, s.to_vec())?,
        None => PointCloud::new(points)?,
    };
    Ok((normalized, center, radius))
}

/// Inverse of [`normalize_to_unit_sphere`].
pub fn denormalize(cloud: &PointCloud, center: Point3, radius: f64) -> Result<PointCloud> {
    let points = cloud
        .points()
        .iter()
        .map(|&p| p * radius + center)
        .collect();
    match cloud.saliency() {
        Some(s) => PointCloud::with_saliency(points, s.to_vec()),
        None => PointCloud::new(points),
    }
}
