//! PLY clouds and meshes, ascii or binary little-endian.
//!
//! Vertex elements may carry `x`, `y`, `z` and an optional `saliency`
//! scalar; face elements carry a `vertex_indices` list. Any other property
//! is rejected rather than silently dropped.

use super::{malformed, TriangleMesh};
use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, kind: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

struct Header {
    encoding: Encoding,
    elements: Vec<ElementDecl>,
    /// byte offset of the body and line number just past `end_header`
    body_start: usize,
    body_line: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut lineno = 0usize;
    let mut next_line = |bytes: &[u8]| -> Option<(usize, String)> {
        if offset >= bytes.len() {
            return None;
        }
        let start = offset;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .unwrap_or(bytes.len());
        offset = end + 1;
        lineno += 1;
        let line = String::from_utf8_lossy(&bytes[start..end])
            .trim_end_matches('\r')
            .trim()
            .to_string();
        Some((lineno, line))
    };

    match next_line(bytes) {
        Some((_, magic)) if magic == "ply" => {}
        _ => return Err(malformed(path, 1, "missing `ply` magic")),
    }

    let mut encoding: Option<Encoding> = None;
    let mut elements: Vec<ElementDecl> = Vec::new();
    loop {
        let (no, line) = match next_line(bytes) {
            Some(x) => x,
            None => return Err(malformed(path, lineno, "header has no `end_header`")),
        };
        if line.is_empty() || line.starts_with("comment") || line.starts_with("obj_info") {
            continue;
        }
        if line == "end_header" {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "format" => {
                if fields.len() != 3 {
                    return Err(malformed(path, no, "bad format line"));
                }
                encoding = Some(match fields[1] {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLittleEndian,
                    other => {
                        return Err(malformed(
                            path,
                            no,
                            format!("unsupported PLY format `{other}`"),
                        ))
                    }
                });
            }
            "element" => {
                if fields.len() != 3 {
                    return Err(malformed(path, no, "bad element line"));
                }
                let count: usize = fields[2]
                    .parse()
                    .map_err(|_| malformed(path, no, "bad element count"))?;
                elements.push(ElementDecl {
                    name: fields[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed(path, no, "property before any element"))?;
                if fields.get(1) == Some(&"list") {
                    if fields.len() != 5 {
                        return Err(malformed(path, no, "bad list property line"));
                    }
                    let count = Scalar::parse(fields[2])
                        .ok_or_else(|| malformed(path, no, "unknown list count type"))?;
                    let item = Scalar::parse(fields[3])
                        .ok_or_else(|| malformed(path, no, "unknown list item type"))?;
                    element.properties.push(Property::List {
                        name: fields[4].to_string(),
                        count,
                        item,
                    });
                } else {
                    if fields.len() != 3 {
                        return Err(malformed(path, no, "bad property line"));
                    }
                    let kind = Scalar::parse(fields[1])
                        .ok_or_else(|| malformed(path, no, "unknown property type"))?;
                    element.properties.push(Property::Scalar {
                        name: fields[2].to_string(),
                        kind,
                    });
                }
            }
            other => {
                return Err(malformed(
                    path,
                    no,
                    format!("unrecognized header record `{other}`"),
                ))
            }
        }
    }

    Ok(Header {
        encoding: encoding.ok_or_else(|| malformed(path, lineno, "header has no format line"))?,
        elements,
        body_start: offset,
        body_line: lineno,
    })
}

/// Parsed body of one file: vertex columns and optional faces.
struct Parsed {
    points: Vec<Point3>,
    saliency: Option<Vec<f64>>,
    triangles: Vec<[usize; 3]>,
}

fn parse_body(path: &Path, bytes: &[u8], header: &Header) -> Result<Parsed> {
    // validate the schema before touching the body
    for element in &header.elements {
        match element.name.as_str() {
            "vertex" => {
                for prop in &element.properties {
                    match prop {
                        Property::Scalar { name, kind } => {
                            let supported = matches!(name.as_str(), "x" | "y" | "z" | "saliency");
                            let numeric = matches!(kind, Scalar::F32 | Scalar::F64);
                            if !supported || !numeric {
                                return Err(Error::UnsupportedProperty {
                                    element: element.name.clone(),
                                    property: name.clone(),
                                });
                            }
                        }
                        Property::List { name, .. } => {
                            return Err(Error::UnsupportedProperty {
                                element: element.name.clone(),
                                property: name.clone(),
                            })
                        }
                    }
                }
                let names: Vec<&str> = element
                    .properties
                    .iter()
                    .map(|p| match p {
                        Property::Scalar { name, .. } | Property::List { name, .. } => {
                            name.as_str()
                        }
                    })
                    .collect();
                for required in ["x", "y", "z"] {
                    if !names.contains(&required) {
                        return Err(malformed(
                            path,
                            header.body_line,
                            format!("vertex element lacks property `{required}`"),
                        ));
                    }
                }
            }
            "face" => {
                for prop in &element.properties {
                    match prop {
                        Property::List { name, .. }
                            if name == "vertex_indices" || name == "vertex_index" => {}
                        Property::List { name, .. } | Property::Scalar { name, .. } => {
                            return Err(Error::UnsupportedProperty {
                                element: element.name.clone(),
                                property: name.clone(),
                            })
                        }
                    }
                }
            }
            other => {
                return Err(malformed(
                    path,
                    header.body_line,
                    format!("unsupported element `{other}`"),
                ))
            }
        }
    }

    let mut points = Vec::new();
    let mut saliency = Vec::new();
    let mut has_saliency = false;
    let mut triangles = Vec::new();

    match header.encoding {
        Encoding::Ascii => {
            let text = String::from_utf8_lossy(&bytes[header.body_start..]);
            let mut lines = text
                .lines()
                .enumerate()
                .map(|(i, l)| (header.body_line + 1 + i, l.trim()))
                .filter(|(_, l)| !l.is_empty());
            for element in &header.elements {
                for _ in 0..element.count {
                    let (no, line) = lines.next().ok_or_else(|| {
                        malformed(path, header.body_line, "body ended early")
                    })?;
                    let mut fields = line.split_whitespace();
                    let mut take = |what: &str| -> Result<f64> {
                        fields
                            .next()
                            .ok_or_else(|| malformed(path, no, format!("missing {what}")))?
                            .parse::<f64>()
                            .map_err(|_| malformed(path, no, format!("bad {what}")))
                    };
                    if element.name == "vertex" {
                        let (mut x, mut y, mut z, mut s) = (0.0, 0.0, 0.0, None);
                        for prop in &element.properties {
                            if let Property::Scalar { name, .. } = prop {
                                let v = take(name)?;
                                match name.as_str() {
                                    "x" => x = v,
                                    "y" => y = v,
                                    "z" => z = v,
                                    _ => s = Some(v),
                                }
                            }
                        }
                        points.push(Point3::new(x, y, z));
                        if let Some(v) = s {
                            has_saliency = true;
                            saliency.push(v);
                        }
                    } else {
                        let k = take("face count")? as usize;
                        let mut poly = Vec::with_capacity(k);
                        for _ in 0..k {
                            let idx = take("face index")?;
                            if idx < 0.0 || idx.fract() != 0.0 {
                                return Err(malformed(path, no, "bad face index"));
                            }
                            poly.push(idx as usize);
                        }
                        push_polygon(path, no, &poly, points.len(), &mut triangles)?;
                    }
                }
            }
        }
        Encoding::BinaryLittleEndian => {
            let mut cursor = Cursor {
                bytes: &bytes[header.body_start..],
                pos: 0,
            };
            for element in &header.elements {
                for _ in 0..element.count {
                    if element.name == "vertex" {
                        let (mut x, mut y, mut z, mut s) = (0.0, 0.0, 0.0, None);
                        for prop in &element.properties {
                            if let Property::Scalar { name, kind } = prop {
                                let v = cursor.scalar(path, *kind)?;
                                match name.as_str() {
                                    "x" => x = v,
                                    "y" => y = v,
                                    "z" => z = v,
                                    _ => s = Some(v),
                                }
                            }
                        }
                        points.push(Point3::new(x, y, z));
                        if let Some(v) = s {
                            has_saliency = true;
                            saliency.push(v);
                        }
                    } else {
                        for prop in &element.properties {
                            if let Property::List { count, item, .. } = prop {
                                let k = cursor.scalar(path, *count)?;
                                if k < 0.0 || k.fract() != 0.0 {
                                    return Err(malformed(path, 0, "bad face count"));
                                }
                                let k = k as usize;
                                let mut poly = Vec::with_capacity(k);
                                for _ in 0..k {
                                    let idx = cursor.scalar(path, *item)?;
                                    if idx < 0.0 || idx.fract() != 0.0 {
                                        return Err(malformed(path, 0, "bad face index"));
                                    }
                                    poly.push(idx as usize);
                                }
                                push_polygon(path, 0, &poly, points.len(), &mut triangles)?;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(Parsed {
        points,
        saliency: if has_saliency { Some(saliency) } else { None },
        triangles,
    })
}

fn push_polygon(
    path: &Path,
    lineno: usize,
    poly: &[usize],
    vertex_count: usize,
    triangles: &mut Vec<[usize; 3]>,
) -> Result<()> {
    if poly.len() < 3 {
        return Err(malformed(path, lineno, "face with fewer than 3 vertices"));
    }
    if let Some(&bad) = poly.iter().find(|&&i| i >= vertex_count) {
        return Err(malformed(
            path,
            lineno,
            format!("face references vertex {bad} of {vertex_count}"),
        ));
    }
    for i in 1..poly.len() - 1 {
        triangles.push([poly[0], poly[i], poly[i + 1]]);
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn scalar(&mut self, path: &Path, kind: Scalar) -> Result<f64> {
        let size = kind.size();
        if self.pos + size > self.bytes.len() {
            return Err(malformed(path, 0, "binary body ended early"));
        }
        let raw = &self.bytes[self.pos..self.pos + size];
        self.pos += size;
        Ok(match kind {
            Scalar::I8 => raw[0] as i8 as f64,
            Scalar::U8 => raw[0] as f64,
            Scalar::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes([
                raw[0], raw[1], raw[2], raw[3], raw[4], raw[5], raw[6], raw[7],
            ]),
        })
    }
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    let header = parse_header(path, &bytes)?;
    let parsed = parse_body(path, &bytes, &header)?;
    let build = match parsed.saliency {
        Some(s) => PointCloud::with_saliency(parsed.points, s),
        None => PointCloud::new(parsed.points),
    };
    build.map_err(|e| match e {
        Error::InvalidInput(msg) => malformed(path, 0, msg),
        other => other,
    })
}

pub fn read_mesh(path: &Path) -> Result<(TriangleMesh, usize)> {
    let bytes = fs::read(path)?;
    let header = parse_header(path, &bytes)?;
    let parsed = parse_body(path, &bytes, &header)?;
    TriangleMesh::new(parsed.points, parsed.triangles).map_err(|e| match e {
        Error::InvalidInput(msg) => malformed(path, 0, msg),
        other => other,
    })
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, binary: bool) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let format = if binary {
        "binary_little_endian"
    } else {
        "ascii"
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {format} 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if cloud.saliency().is_some() {
        writeln!(w, "property float saliency")?;
    }
    writeln!(w, "end_header")?;

    if binary {
        for (i, p) in cloud.points().iter().enumerate() {
            w.write_all(&(p.x as f32).to_le_bytes())?;
            w.write_all(&(p.y as f32).to_le_bytes())?;
            w.write_all(&(p.z as f32).to_le_bytes())?;
            if let Some(s) = cloud.saliency() {
                w.write_all(&(s[i] as f32).to_le_bytes())?;
            }
        }
    } else {
        for (i, p) in cloud.points().iter().enumerate() {
            match cloud.saliency() {
                Some(s) => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, s[i])?,
                None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertices().len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "element face {}", mesh.triangles().len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    w.flush()?;
    Ok(())
}
