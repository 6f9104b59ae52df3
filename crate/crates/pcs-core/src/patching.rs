//! Partitioning a dense cloud into patches around seeds, extracting
//! fixed-size network inputs, and merging per-patch outputs back into one
//! simplified cloud.

use crate::error::{Error, Result};
use crate::geom::{
    farthest_point_sampling, poisson_disk_seeds, KnnIndex, Point3, PointCloud, Rng,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PATCH_INPUT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// farthest-point seeds, evenly spread
    Uniform,
    /// saliency-weighted Poisson-disk seeds, denser near features
    Adaptive,
}

/// Nearest-seed assignment of every cloud point to one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// per-point seed slot (index into `seeds`)
    pub assignment: Vec<usize>,
    /// seed point indices into the parent cloud
    pub seeds: Vec<usize>,
    pub mode: PartitionMode,
}

impl Partition {
    /// Parent indices of the cell owned by one seed slot.
    pub fn cell(&self, slot: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == slot)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Fixed-size network input drawn from one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// parent cloud index of every input point (repeats possible when the
    /// cell was smaller than the input size)
    pub parent_indices: Vec<usize>,
    /// parent cloud index of the seed
    pub seed_index: usize,
    pub points: Vec<Point3>,
    pub saliency: Option<Vec<f64>>,
    pub with_replacement: bool,
}

/// Seeds a partition and assigns every point to its nearest seed
/// (ties toward the lower seed slot). Seeds whose cell came out empty are
/// removed and the assignment recomputed.
pub fn make_partition(
    cloud: &PointCloud,
    num_patches: usize,
    mode: PartitionMode,
    rng: &mut Rng,
) -> Result<Partition> {
    if num_patches == 0 || num_patches > cloud.len() {
        return Err(Error::CountTooLarge {
            count: num_patches,
            size: cloud.len(),
        });
    }
    let mut seeds = match mode {
        PartitionMode::Uniform => farthest_point_sampling(cloud, num_patches, rng)?,
        PartitionMode::Adaptive => {
            let weights = cloud.saliency().ok_or(Error::MissingSaliency)?;
            poisson_disk_seeds(cloud, num_patches, Some(weights), rng)?
        }
    };

    loop {
        let assignment = assign_nearest(cloud, &seeds);
        let mut occupied = vec![false; seeds.len()];
        for &s in &assignment {
            occupied[s] = true;
        }
        if occupied.iter().all(|&o| o) {
            return Ok(Partition {
                assignment,
                seeds,
                mode,
            });
        }
        seeds = seeds
            .iter()
            .zip(&occupied)
            .filter(|(_, &o)| o)
            .map(|(&s, _)| s)
            .collect();
    }
}

fn assign_nearest(cloud: &PointCloud, seeds: &[usize]) -> Vec<usize> {
    let seed_points: Vec<Point3> = seeds.iter().map(|&i| cloud.points()[i]).collect();
    let index = KnnIndex::from_points(seed_points);
    cloud
        .points()
        .iter()
        .map(|&p| index.nearest_sq(p).0)
        .collect()
}

/// Draws the fixed-size input for one cell: without replacement when the
/// cell is large enough, with replacement (flagged) otherwise.
pub fn extract_patch_input(
    cloud: &PointCloud,
    partition: &Partition,
    slot: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<Patch> {
    if slot >= partition.seeds.len() {
        return Err(Error::InvalidInput(format!(
            "seed slot {slot} out of range for {} seeds",
            partition.seeds.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("patch input size must be positive".into()));
    }
    let cell = partition.cell(slot);
    debug_assert!(!cell.is_empty(), "make_partition removes empty cells");

    let (parent_indices, with_replacement) = if cell.len() >= n {
        let picks = rng.sample_without_replacement(cell.len(), n);
        (picks.into_iter().map(|i| cell[i]).collect::<Vec<_>>(), false)
    } else {
        let picks = (0..n).map(|_| cell[rng.index(cell.len())]).collect();
        (picks, true)
    };

    let points = parent_indices
        .iter()
        .map(|&i| cloud.points()[i])
        .collect();
    let saliency = cloud
        .saliency()
        .map(|s| parent_indices.iter().map(|&i| s[i]).collect());
    Ok(Patch {
        parent_indices,
        seed_index: partition.seeds[slot],
        points,
        saliency,
        with_replacement,
    })
}

/// Concatenates per-patch outputs; any excess over `target` is trimmed by
/// farthest-point sampling so coverage stays even.
pub fn merge_outputs(
    patch_outputs: &[PointCloud],
    target: usize,
    rng: &mut Rng,
) -> Result<PointCloud> {
    if patch_outputs.is_empty() {
        return Err(Error::InvalidInput("no patch outputs to merge".into()));
    }
    let mut all = Vec::new();
    for c in patch_outputs {
        all.extend_from_slice(c.points());
    }
    let merged = PointCloud::new(all)?;
    if merged.len() <= target {
        return Ok(merged);
    }
    let keep = farthest_point_sampling(&merged, target, rng)?;
    merged.select(&keep)
}


/// One patch's entry in the on-disk manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchManifestEntry {
    pub file: String,
    pub seed_index: usize,
    pub with_replacement: bool,
    pub parent_indices: Vec<usize>,
}

/// Manifest written next to the per-patch cloud files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchManifest {
    pub mode: PartitionMode,
    pub n: usize,
    pub seeds: Vec<usize>,
    pub patches: Vec<PatchManifestEntry>,
}

pub const MANIFEST_FILE: &str = "patches.json";

/// Extracts one patch per seed and writes each as a cloud file plus a
/// manifest into `dir`.
pub fn write_patch_set(
    dir: &std::path::Path,
    cloud: &PointCloud,
    partition: &Partition,
    n: usize,
    rng: &mut Rng,
) -> Result<PatchManifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(partition.seeds.len());
    for slot in 0..partition.seeds.len() {
        let patch = extract_patch_input(cloud, partition, slot, n, rng)?;
        let file = format!("patch_{slot:04}.xyz");
        let patch_cloud = match &patch.saliency {
            Some(s) => PointCloud::with_saliency(patch.points.clone(), s.clone())?,
            None => PointCloud::new(patch.points.clone())?,
        };
        crate::io::write_cloud(&patch_cloud, &dir.join(&file))?;
        entries.push(PatchManifestEntry {
            file,
            seed_index: patch.seed_index,
            with_replacement: patch.with_replacement,
            parent_indices: patch.parent_indices,
        });
    }
    let manifest = PatchManifest {
        mode: partition.mode,
        n,
        seeds: partition.seeds.clone(),
        patches: entries,
    };
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Loads a patch set written by [`write_patch_set`].
pub fn load_patch_set(dir: &std::path::Path) -> Result<Vec<Patch>> {
    let manifest: PatchManifest =
        serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    let mut patches = Vec::with_capacity(manifest.patches.len());
    for entry in &manifest.patches {
        let cloud = crate::io::read_cloud(&dir.join(&entry.file))?;
        if cloud.len() != manifest.n {
            return Err(Error::InvalidInput(format!(
                "{} holds {} points, manifest says {}",
                entry.file,
                cloud.len(),
                manifest.n
            )));
        }
        patches.push(Patch {
            parent_indices: entry.parent_indices.clone(),
            seed_index: entry.seed_index,
            points: cloud.points().to_vec(),
            saliency: cloud.saliency().map(|s| s.to_vec()),
            with_replacement: entry.with_replacement,
        });
    }
    Ok(patches)
}

#[cfg(test)]
mod persist_tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn patch_set_roundtrips_through_disk() {
        let mut rng = Rng::from_seed(150);
        let mut cloud = crate::saliency::cube_surface(600, &mut rng);
        let sal: Vec<f64> = (0..cloud.len()).map(|_| rng.f64()).collect();
        cloud.set_saliency(sal).unwrap();
        let partition = make_partition(&cloud, 5, PartitionMode::Uniform, &mut rng).unwrap();

        let dir = tempdir().unwrap();
        let manifest = write_patch_set(dir.path(), &cloud, &partition, 64, &mut rng).unwrap();
        assert_eq!(manifest.patches.len(), 5);

        let loaded = load_patch_set(dir.path()).unwrap();
        assert_eq!(loaded.len(), 5);
        for (patch, entry) in loaded.iter().zip(&manifest.patches) {
            assert_eq!(patch.seed_index, entry.seed_index);
            assert_eq!(patch.parent_indices, entry.parent_indices);
            assert_eq!(patch.points.len(), 64);
            assert!(patch.saliency.is_some());
            for (&pi, p) in patch.parent_indices.iter().zip(&patch.points) {
                assert_eq!(*p, cloud.points()[pi]);
            }
        }
    }
}
