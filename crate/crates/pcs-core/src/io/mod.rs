//! File I/O for point clouds and triangle meshes, plus surface sampling.
//!
//! Formats: XYZ text (`x y z [saliency]` per line), OBJ (`v`/`f` subset,
//! polygons fan-triangulated), and PLY (ascii or binary little-endian,
//! float `x,y,z` with an optional `saliency` vertex property).

mod obj;
mod ply;
mod sample;
mod xyz;

pub use sample::sample_mesh_surface;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};
use std::path::Path;

/// Vertices plus triangle connectivity. Zero-area faces are dropped at load
/// time, so a constructed mesh never carries degenerate triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates index ranges and drops zero-area triangles; returns the
    /// mesh and how many faces were dropped.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<(Self, usize)> {
        if vertices.is_empty() {
            return Err(Error::InvalidInput("mesh has no vertices".into()));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("vertex {i}"),
            });
        }
        let mut kept = Vec::with_capacity(triangles.len());
        let mut dropped = 0usize;
        for (ti, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidInput(format!(
                    "triangle {ti} references a vertex out of range"
                )));
            }
            let [a, b, c] = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            if (b - a).cross(c - a).norm_sq() == 0.0 {
                dropped += 1;
            } else {
                kept.push(*t);
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidInput("mesh has no nondegenerate triangles".into()));
        }
        Ok((
            TriangleMesh {
                vertices,
                triangles: kept,
            },
            dropped,
        ))
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_points(&self, i: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }
}

/// On-disk cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
    PlyBinaryLittleEndian,
}

/// Reads a mesh, dispatching on the file extension (`.obj` or `.ply`).
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    read_mesh_with_stats(path).map(|(m, _)| m)
}

/// Reads a mesh and reports how many degenerate faces were dropped.
pub fn read_mesh_with_stats(path: &Path) -> Result<(TriangleMesh, usize)> {
    match extension(path)?.as_str() {
        "obj" => obj::read(path),
        "ply" => ply::read_mesh(path),
        other => Err(Error::InvalidInput(format!(
            "unsupported mesh extension `{other}`"
        ))),
    }
}

pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    match extension(path)?.as_str() {
        "obj" => obj::write(mesh, path),
        "ply" => ply::write_mesh(mesh, path),
        other => Err(Error::InvalidInput(format!(
            "unsupported mesh extension `{other}`"
        ))),
    }
}

/// Reads a cloud, dispatching on the file extension (`.xyz`, `.txt`, `.pts`
/// are XYZ text; `.ply` detects ascii vs binary from the header).
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    match extension(path)?.as_str() {
        "xyz" | "txt" | "pts" => xyz::read(path),
        "ply" => ply::read_cloud(path),
        other => Err(Error::InvalidInput(format!(
            "unsupported cloud extension `{other}`"
        ))),
    }
}

/// Writes a cloud in the extension's default encoding (PLY defaults to
/// ascii; use [`write_cloud_as`] for binary).
pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let format = match extension(path)?.as_str() {
        "xyz" | "txt" | "pts" => CloudFormat::Xyz,
        "ply" => CloudFormat::PlyAscii,
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported cloud extension `{other}`"
            )))
        }
    };
    write_cloud_as(cloud, path, format)
}

pub fn write_cloud_as(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    match format {
        CloudFormat::Xyz => xyz::write(cloud, path),
        CloudFormat::PlyAscii => ply::write_cloud(cloud, path, false),
        CloudFormat::PlyBinaryLittleEndian => ply::write_cloud(cloud, path, true),
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file extension", path.display())))
}

pub(crate) fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}
