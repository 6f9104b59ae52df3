//! Aggregated evaluation report for one candidate against ground truth.

use super::{chamfer, hausdorff, point_to_face, triangle_quality};
use crate::error::Result;
use crate::geom::{PointCloud, Rng};
use crate::io::{sample_mesh_surface, TriangleMesh};
use serde::{Deserialize, Serialize};

/// Default dense-sampling size for mesh distances.
pub const DEFAULT_W: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Chamfer distance (squared-distance convention) between dense samples
    pub d_c: f64,
    /// Hausdorff distance (squared-distance convention)
    pub d_h: f64,
    /// mean point-to-face distance of the candidate points to the
    /// ground-truth mesh
    pub p2f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_avg_degrees: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pct_below_30: Option<f64>,
    /// dense sample count used for d_c / d_h
    pub w: usize,
}

impl MetricsReport {
    /// Fixed-width text table in the usual column order. When `scaled`,
    /// distances are reported as d_c*1e3, d_h*1e2, p2f*1e4.
    pub fn table(&self, scaled: bool) -> String {
        let (dc, dh, p2f) = if scaled {
            (self.d_c * 1e3, self.d_h * 1e2, self.p2f * 1e4)
        } else {
            (self.d_c, self.d_h, self.p2f)
        };
        let header = if scaled {
            "D_c(e-3)    D_h(e-2)    p2f(e-4)    G       theta_avg  %<30"
        } else {
            "D_c         D_h         p2f         G       theta_avg  %<30"
        };
        let fmt_opt = |v: Option<f64>, width: usize, prec: usize| match v {
            Some(x) => format!("{x:<width$.prec$}"),
            None => format!("{:<width$}", "-"),
        };
        format!(
            "{header}\n{dc:<12.5}{dh:<12.5}{p2f:<12.5}{}{}{}",
            fmt_opt(self.g_mean, 8, 3),
            fmt_opt(self.theta_avg_degrees, 11, 1),
            fmt_opt(self.pct_below_30, 6, 2),
        )
    }
}

/// Scores candidate points against a ground-truth mesh.
///
/// Dense samples of the ground truth (`w` points) are compared against
/// dense samples of `recon_mesh` when given, otherwise against the candidate
/// points themselves. Triangle-quality columns are present only with a
/// reconstructed mesh.
pub fn compute_report(
    gt_mesh: &TriangleMesh,
    candidate_points: &PointCloud,
    recon_mesh: Option<&TriangleMesh>,
    w: usize,
    rng: &mut Rng,
) -> Result<MetricsReport> {
    let gt_dense = sample_mesh_surface(gt_mesh, w, rng)?;
    let candidate_dense = match recon_mesh {
        Some(mesh) => sample_mesh_surface(mesh, w, rng)?,
        None => candidate_points.clone(),
    };
    let d_c = chamfer(&gt_dense, &candidate_dense)?;
    let d_h = hausdorff(&gt_dense, &candidate_dense)?;
    let p2f = point_to_face(candidate_points, gt_mesh)?;
    let quality = recon_mesh.map(triangle_quality).transpose()?;
    Ok(MetricsReport {
        d_c,
        d_h,
        p2f,
        g_mean: quality.map(|q| q.g_mean),
        theta_avg_degrees: quality.map(|q| q.theta_avg_degrees),
        pct_below_30: quality.map(|q| q.pct_below_30),
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;

    fn tetra() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
        )
        .unwrap()
        .0
    }

    #[test]
    fn on_surface_candidate_scores_near_zero() {
        let mesh = tetra();
        let mut rng = Rng::from_seed(80);
        let candidate = sample_mesh_surface(&mesh, 500, &mut rng).unwrap();
        let report =
            compute_report(&mesh, &candidate, Some(&mesh), 2000, &mut rng).unwrap();
        assert!(report.p2f < 1e-12);
        assert!(report.d_c < 1e-2);
        assert!(report.g_mean.is_some());
    }

    #[test]
    fn report_without_recon_mesh_omits_quality() {
        let mesh = tetra();
        let mut rng = Rng::from_seed(81);
        let candidate = sample_mesh_surface(&mesh, 200, &mut rng).unwrap();
        let report = compute_report(&mesh, &candidate, None, 1000, &mut rng).unwrap();
        assert!(report.g_mean.is_none());
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("g_mean"));
        assert!(report.table(true).contains("-"));
    }
}
