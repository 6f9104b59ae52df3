//! Triangle shape statistics for reconstructed meshes.

use crate::error::{Error, Result};
use crate::io::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityStats {
    /// mean of G = 2*sqrt(3)*area / (half_perimeter * longest_edge), 1 for
    /// an equilateral triangle
    pub g_mean: f64,
    /// mean over triangles of the minimum interior angle, degrees
    pub theta_avg_degrees: f64,
    /// percentage of triangles whose minimum angle is below 30 degrees
    pub pct_below_30: f64,
}

pub fn triangle_quality(mesh: &TriangleMesh) -> Result<QualityStats> {
    let n = mesh.triangles().len();
    if n == 0 {
        return Err(Error::InvalidInput("mesh has no triangles".into()));
    }
    let mut g_sum = 0.0;
    let mut theta_sum = 0.0;
    let mut below = 0usize;
    for i in 0..n {
        let [a, b, c] = mesh.triangle_points(i);
        let la = (b - c).norm();
        let lb = (a - c).norm();
        let lc = (a - b).norm();
        let area = 0.5 * (b - a).cross(c - a).norm();
        if area <= 0.0 {
            return Err(Error::DegenerateTriangle { index: i });
        }
        let half_perimeter = 0.5 * (la + lb + lc);
        let longest = la.max(lb).max(lc);
        g_sum += 2.0 * 3.0f64.sqrt() * area / (half_perimeter * longest);

        // law of cosines per corner, clamped against rounding
        let angle = |opp: f64, e1: f64, e2: f64| -> f64 {
            ((e1 * e1 + e2 * e2 - opp * opp) / (2.0 * e1 * e2))
                .clamp(-1.0, 1.0)
                .acos()
        };
        let theta = angle(la, lb, lc)
            .min(angle(lb, la, lc))
            .min(angle(lc, la, lb))
            .to_degrees();
        theta_sum += theta;
        if theta < 30.0 {
            below += 1;
        }
    }
    Ok(QualityStats {
        g_mean: g_sum / n as f64,
        theta_avg_degrees: theta_sum / n as f64,
        pct_below_30: 100.0 * below as f64 / n as f64,
    })
}
