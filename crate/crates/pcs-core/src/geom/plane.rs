//! Total-least-squares plane fitting via the covariance eigenproblem.

use super::Point3;
use crate::error::{Error, Result};

/// A plane `{ x : normal . x = offset }` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedPlane {
    pub normal: Point3,
    pub offset: f64,
}

/// Fits the total-least-squares plane: the normal is the eigenvector of the
/// point covariance matrix with the smallest eigenvalue, which minimizes the
/// sum of squared orthogonal distances.
///
/// The normal's sign is canonicalized (largest-magnitude component positive)
/// so results are deterministic.
pub fn fit_plane(points: &[Point3]) -> Result<FittedPlane> {
    if points.len() < 3 {
        return Err(Error::RankDeficient {
            points: points.len(),
        });
    }
    let inv_n = 1.0 / points.len() as f64;
    let mut centroid = Point3::ORIGIN;
    for p in points {
        centroid = centroid + *p;
    }
    centroid = centroid * inv_n;

    let mut cov = [[0.0f64; 3]; 3];
    for p in points {
        let d = *p - centroid;
        let v = [d.x, d.y, d.z];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += v[i] * v[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for c in row.iter_mut() {
            *c *= inv_n;
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen_3x3(cov);
    // ascending eigenvalues
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigvals[a].total_cmp(&eigvals[b]));
    let (lo, mid, hi) = (eigvals[order[0]], eigvals[order[1]], eigvals[order[2]]);
    let _ = lo;
    // collinear (or fully degenerate) data: the two smallest eigenvalues
    // vanish relative to the largest
    if hi <= 0.0 || mid <= hi * 1e-12 {
        return Err(Error::RankDeficient {
            points: points.len(),
        });
    }

    let col = order[0];
    let mut normal = Point3::new(eigvecs[0][col], eigvecs[1][col], eigvecs[2][col]).normalized();
    let dominant = [normal.x.abs(), normal.y.abs(), normal.z.abs()]
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    let dom_val = [normal.x, normal.y, normal.z][dominant];
    if dom_val < 0.0 {
        normal = -normal;
    }

    Ok(FittedPlane {
        normal,
        offset: normal.dot(centroid),
    })
}

/// Unsigned distance from a point to a plane.
pub fn point_plane_distance(p: Point3, plane: &FittedPlane) -> f64 {
    (plane.normal.dot(p) - plane.offset).abs()
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.
/// Returns (eigenvalues, eigenvectors-as-columns).
fn jacobi_eigen_3x3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        let tol = f64::EPSILON * scale;
        if off <= tol * tol {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;

            let (app, aqq) = (a[p][p], a[q][q]);
            a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
            a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            let r = 3 - p - q; // the remaining axis
            let (arp, arq) = (a[r][p], a[r][q]);
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];

            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Mean squared orthogonal distance of points to a plane; used by tests to
/// spot-check optimality.
pub fn plane_residual(points: &[Point3], plane: &FittedPlane) -> f64 {
    points
        .iter()
        .map(|&p| {
            let d = point_plane_distance(p, plane);
            d * d
        })
        .sum::<f64>()
        / points.len() as f64
}
