//! Geometric saliency: per-point distance to the least-squares plane of its
//! neighborhood, optionally smoothed with a Gaussian kernel so flat regions
//! keep a little mass.

use crate::error::{Error, Result};
use crate::geom::{dist_sq, fit_plane, point_plane_distance, KnnIndex, PointCloud};
use rayon::prelude::*;

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_H: f64 = 0.01;

/// Per-point saliency values aligned to one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyField {
    pub values: Vec<f64>,
    pub smoothed: bool,
    /// neighborhoods where the plane fit was rank-deficient and the
    /// saliency fell back to zero
    pub degenerate_count: usize,
}

/// Distance from each point to the total-least-squares plane of its `k`
/// nearest neighbors (the point itself excluded from the fit).
///
/// Rank-deficient neighborhoods yield saliency 0 rather than an error.
pub fn raw_saliency(cloud: &PointCloud, k: usize) -> Result<SaliencyField> {
    if k < 3 {
        return Err(Error::InvalidInput(format!(
            "saliency needs k >= 3 neighbors, got {k}"
        )));
    }
    if cloud.len() < k + 1 {
        return Err(Error::KTooLarge {
            k,
            size: cloud.len(),
        });
    }
    let index = KnnIndex::build(cloud);
    let results: Vec<(f64, bool)> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            // query k+1 and drop the point itself (by index, so duplicate
            // coordinates still work)
            let hits = index.knn(p, k + 1).expect("k+1 <= cloud size");
            let neighbors: Vec<_> = hits
                .iter()
                .filter(|(j, _)| *j != i)
                .take(k)
                .map(|&(j, _)| cloud.points()[j])
                .collect();
            match fit_plane(&neighbors) {
                Ok(plane) => (point_plane_distance(p, &plane), false),
                Err(_) => (0.0, true),
            }
        })
        .collect();

    let degenerate_count = results.iter().filter(|(_, d)| *d).count();
    Ok(SaliencyField {
        values: results.into_iter().map(|(v, _)| v).collect(),
        smoothed: false,
        degenerate_count,
    })
}

/// Gaussian-kernel smoothing over each point's neighborhood (self included,
/// so the denominator never vanishes): weights `exp(-|x_i - x_j|^2 / h^2)`.
pub fn smooth_saliency(
    cloud: &PointCloud,
    raw: &SaliencyField,
    k: usize,
    h: f64,
) -> Result<SaliencyField> {
    if raw.values.len() != cloud.len() {
        return Err(Error::InvalidInput(format!(
            "saliency length {} does not match cloud size {}",
            raw.values.len(),
            cloud.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "smoothing bandwidth must be positive, got {h}"
        )));
    }
    let keff = k.min(cloud.len() - 1);
    let index = KnnIndex::build(cloud);
    let inv_h2 = 1.0 / (h * h);
    let values: Vec<f64> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let hits = index.knn(p, keff + 1).expect("keff+1 <= cloud size");
            let mut num = raw.values[i]; // self weight exp(0) = 1
            let mut den = 1.0;
            for &(j, _) in hits.iter().filter(|(j, _)| *j != i).take(keff) {
                let w = (-dist_sq(p, cloud.points()[j]) * inv_h2).exp();
                num += raw.values[j] * w;
                den += w;
            }
            num / den
        })
        .collect();
    Ok(SaliencyField {
        values,
        smoothed: true,
        degenerate_count: raw.degenerate_count,
    })
}

/// Points on the surface of a unit cube, uniform by face area. Test data
/// shared by a few modules.
#[cfg(test)]
pub(crate) fn cube_surface(n: usize, rng: &mut crate::geom::Rng) -> PointCloud {
    use crate::geom::Point3;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let face = rng.index(6);
        let u = rng.f64();
        let v = rng.f64();
        let p = match face {
            0 => Point3::new(0.0, u, v),
            1 => Point3::new(1.0, u, v),
            2 => Point3::new(u, 0.0, v),
            3 => Point3::new(u, 1.0, v),
            4 => Point3::new(u, v, 0.0),
            _ => Point3::new(u, v, 1.0),
        };
        pts.push(p);
    }
    PointCloud::new(pts).unwrap()
}
