//! XYZ text clouds: one `x y z` or `x y z saliency` line per point.

use super::malformed;
use crate::error::Result;
use crate::geom::{Point3, PointCloud};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn read(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut saliency = Vec::new();
    let mut columns: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(malformed(
                path,
                lineno + 1,
                format!("expected 3 or 4 columns, found {}", fields.len()),
            ));
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(malformed(
                    path,
                    lineno + 1,
                    format!("ragged columns: expected {c}, found {}", fields.len()),
                ));
            }
            _ => {}
        }
        let mut vals = [0.0f64; 4];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.parse().map_err(|_| {
                malformed(path, lineno + 1, format!("cannot parse `{f}` as a number"))
            })?;
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if fields.len() == 4 {
            saliency.push(vals[3]);
        }
    }

    if columns == Some(4) {
        PointCloud::with_saliency(points, saliency)
    } else {
        PointCloud::new(points)
    }
    .map_err(|e| match e {
        crate::Error::InvalidInput(msg) => malformed(path, 0, msg),
        other => other,
    })
}

pub fn write(cloud: &PointCloud, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    match cloud.saliency() {
        Some(s) => {
            for (p, si) in cloud.points().iter().zip(s) {
                // `{}` prints the shortest digits that reparse exactly
                writeln!(w, "{} {} {} {}", p.x, p.y, p.z, si)?;
            }
        }
        None => {
            for p in cloud.points() {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
