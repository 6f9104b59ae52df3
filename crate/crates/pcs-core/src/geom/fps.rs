//! Farthest-point sampling: greedy max-min subset selection.

use super::{dist_sq, PointCloud, Rng};
use crate::error::{Error, Result};

/// Greedy max-min selection of `count` distinct indices. The first index is
/// drawn uniformly from the seeded generator; every later pick maximizes the
/// minimum distance to the already-selected set (ties toward lower index).
pub fn farthest_point_sampling(
    cloud: &PointCloud,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if count > cloud.len() {
        return Err(Error::CountTooLarge {
            count,
            size: cloud.len(),
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let first = rng.index(cloud.len());
    farthest_point_sampling_from(cloud, first, count)
}

/// Same as [`farthest_point_sampling`] but with a caller-chosen first index.
pub fn farthest_point_sampling_from(
    cloud: &PointCloud,
    first: usize,
    count: usize,
) -> Result<Vec<usize>> {
    if count > cloud.len() {
        return Err(Error::CountTooLarge {
            count,
            size: cloud.len(),
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let points = cloud.points();
    let mut selected = Vec::with_capacity(count);
    selected.push(first);

    let mut taken = vec![false; points.len()];
    taken[first] = true;
    let mut min_d: Vec<f64> = points.iter().map(|&p| dist_sq(p, points[first])).collect();
    while selected.len() < count {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if !taken[i] && d > best_d {
                best_d = d;
                best = i;
            }
        }
        taken[best] = true;
        selected.push(best);
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = dist_sq(points[i], points[best]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}
