//! Weighted Poisson-disk seed selection by dart throwing.
//!
//! Candidates are visited in a seeded shuffled order and accepted when they
//! clear every accepted seed by the average of the two per-point radii. Each
//! radius shrinks where the weight is large, so heavier regions receive
//! denser seeds. A bisection on the base radius steers the accepted count
//! toward the target.

use super::{dist_sq, PointCloud, Rng};
use crate::error::{Error, Result};

const WEIGHT_EPS: f64 = 0.1;
const MAX_BISECTION_ROUNDS: usize = 20;

/// Selects roughly `target_count` seed indices (within 10% when the
/// bisection converges, best effort otherwise).
///
/// With `weights`, per-point radii follow `r_i = r_base / (0.1 + w_i / mean)`
/// so high-weight points pack tighter. Without weights all radii equal
/// `r_base`, so the accepted seeds are pairwise farther apart than `r_base`.
pub fn poisson_disk_seeds(
    cloud: &PointCloud,
    target_count: usize,
    weights: Option<&[f64]>,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    poisson_disk_seeds_with_radius(cloud, target_count, weights, rng).map(|(seeds, _)| seeds)
}

/// Same as [`poisson_disk_seeds`], also returning the final base radius.
pub fn poisson_disk_seeds_with_radius(
    cloud: &PointCloud,
    target_count: usize,
    weights: Option<&[f64]>,
    rng: &mut Rng,
) -> Result<(Vec<usize>, f64)> {
    let n = cloud.len();
    if target_count > n {
        return Err(Error::CountTooLarge {
            count: target_count,
            size: n,
        });
    }
    if target_count == 0 {
        return Ok((Vec::new(), 0.0));
    }

    let factors: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidInput(format!(
                    "weight length {} does not match cloud size {}",
                    w.len(),
                    n
                )));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidInput(
                    "weights must be finite and nonnegative".into(),
                ));
            }
            let mean: f64 = w.iter().sum::<f64>() / n as f64;
            if mean <= 0.0 {
                return Err(Error::InvalidInput("weights are all zero".into()));
            }
            w.iter().map(|&wi| 1.0 / (WEIGHT_EPS + wi / mean)).collect()
        }
        None => vec![1.0; n],
    };

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    let points = cloud.points();
    let diameter = {
        let c = cloud.centroid();
        2.0 * points
            .iter()
            .map(|&p| dist_sq(p, c))
            .fold(0.0, f64::max)
            .sqrt()
    };
    let min_factor = factors.iter().cloned().fold(f64::INFINITY, f64::min);
    // hi rejects everything but the first candidate, lo accepts every
    // distinct position
    let mut lo = 0.0f64;
    let mut hi = (2.0 * diameter + 1.0) / min_factor;

    let throw = |r_base: f64| -> Vec<usize> {
        let mut accepted: Vec<usize> = Vec::new();
        for &i in &order {
            let ok = accepted.iter().all(|&j| {
                let threshold = 0.5 * (factors[i] + factors[j]) * r_base;
                dist_sq(points[i], points[j]) > threshold * threshold
            });
            if ok {
                accepted.push(i);
            }
        }
        accepted
    };

    let lo_band = (0.9 * target_count as f64).ceil() as usize;
    let hi_band = (1.1 * target_count as f64).floor() as usize;

    let mut best: Option<(Vec<usize>, f64, usize)> = None;
    for _ in 0..MAX_BISECTION_ROUNDS {
        let r = 0.5 * (lo + hi);
        let accepted = throw(r);
        let count = accepted.len();
        let gap = count.abs_diff(target_count);
        if best.as_ref().map_or(true, |(_, _, g)| gap < *g) {
            best = Some((accepted.clone(), r, gap));
        }
        if count >= lo_band && count <= hi_band {
            break;
        }
        if count > target_count {
            lo = r;
        } else {
            hi = r;
        }
    }
    let (seeds, r_base, _) = best.expect("at least one bisection round ran");
    Ok((seeds, r_base))
}
