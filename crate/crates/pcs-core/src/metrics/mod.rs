//! Fidelity and mesh-quality evaluation: Chamfer and Hausdorff distances
//! over dense samples, mean point-to-face distance, and triangle shape
//! statistics.

mod p2f;
mod quality;
mod report;

pub use p2f::{point_to_face, point_triangle_dist_sq, TriangleBvh};
pub use quality::{triangle_quality, QualityStats};
pub use report::{compute_report, MetricsReport, DEFAULT_W};

use crate::error::{Error, Result};
use crate::geom::{KnnIndex, PointCloud};

/// Chamfer distance between two clouds: the sum of the two directed mean
/// squared nearest-neighbor distances. Each direction is normalized by its
/// own cloud size, so unequal sizes are fine.
pub fn chamfer(pd: &PointCloud, qd: &PointCloud) -> Result<f64> {
    Ok(directed_mean_sq(pd, qd)? + directed_mean_sq(qd, pd)?)
}

/// Hausdorff distance in the squared-distance convention: the larger of the
/// two directed maxima of squared nearest-neighbor distances.
pub fn hausdorff(pd: &PointCloud, qd: &PointCloud) -> Result<f64> {
    Ok(directed_max_sq(pd, qd)?.max(directed_max_sq(qd, pd)?))
}

fn check_nonempty(cloud: &PointCloud) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("metric over an empty cloud".into()));
    }
    Ok(())
}

fn directed_mean_sq(from: &PointCloud, to: &PointCloud) -> Result<f64> {
    check_nonempty(from)?;
    check_nonempty(to)?;
    let index = KnnIndex::build(to);
    let sum: f64 = from
        .points()
        .iter()
        .map(|&p| index.nearest_sq(p).1)
        .sum();
    Ok(sum / from.len() as f64)
}

fn directed_max_sq(from: &PointCloud, to: &PointCloud) -> Result<f64> {
    check_nonempty(from)?;
    check_nonempty(to)?;
    let index = KnnIndex::build(to);
    Ok(from
        .points()
        .iter()
        .map(|&p| index.nearest_sq(p).1)
        .fold(0.0, f64::max))
}
