//! OBJ mesh subset: `v` and `f` records, 1-based indices, polygon faces
//! fan-triangulated. Normals, texture coordinates, and grouping records are
//! skipped; anything unrecognized is an error.

use super::{malformed, TriangleMesh};
use crate::error::Result;
use crate::geom::Point3;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

const SKIPPED_KEYWORDS: &[&str] = &[
    "vn", "vt", "vp", "o", "g", "s", "mtllib", "usemtl", "l", "p",
];

pub fn read(path: &Path) -> Result<(TriangleMesh, usize)> {
    let text = fs::read_to_string(path)?;
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let keyword = fields.next().unwrap();
        match keyword {
            "v" => {
                let coords: Vec<&str> = fields.collect();
                if coords.len() < 3 {
                    return Err(malformed(
                        path,
                        lineno + 1,
                        format!("vertex needs 3 coordinates, found {}", coords.len()),
                    ));
                }
                let mut xyz = [0.0f64; 3];
                for (i, c) in coords[..3].iter().enumerate() {
                    xyz[i] = c.parse().map_err(|_| {
                        malformed(path, lineno + 1, format!("cannot parse `{c}` as a number"))
                    })?;
                }
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            "f" => {
                let mut indices = Vec::new();
                for field in fields {
                    // "i", "i/t", "i/t/n", "i//n" all reference vertex i
                    let vid = field.split('/').next().unwrap();
                    let idx: i64 = vid.parse().map_err(|_| {
                        malformed(path, lineno + 1, format!("cannot parse face index `{vid}`"))
                    })?;
                    if idx < 1 {
                        return Err(malformed(
                            path,
                            lineno + 1,
                            format!("face index {idx} is not 1-based"),
                        ));
                    }
                    let idx = (idx - 1) as usize;
                    if idx >= vertices.len() {
                        return Err(malformed(
                            path,
                            lineno + 1,
                            format!("face references vertex {} of {}", idx + 1, vertices.len()),
                        ));
                    }
                    indices.push(idx);
                }
                if indices.len() < 3 {
                    return Err(malformed(
                        path,
                        lineno + 1,
                        format!("face needs at least 3 vertices, found {}", indices.len()),
                    ));
                }
                for i in 1..indices.len() - 1 {
                    triangles.push([indices[0], indices[i], indices[i + 1]]);
                }
            }
            k if SKIPPED_KEYWORDS.contains(&k) => {}
            other => {
                return Err(malformed(
                    path,
                    lineno + 1,
                    format!("unrecognized record `{other}`"),
                ));
            }
        }
    }

    TriangleMesh::new(vertices, triangles).map_err(|e| match e {
        crate::Error::InvalidInput(msg) => malformed(path, 0, msg),
        other => other,
    })
}

pub fn write(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}
