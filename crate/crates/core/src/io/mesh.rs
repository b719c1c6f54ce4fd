//! Triangle meshes as ASCII OBJ and binary little-endian PLY.
//!
//! Both writers keep full `f64` precision (OBJ through 17-digit reals, PLY
//! through `double` properties), so a mesh reads back unchanged.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, TriangleMesh};

use super::fmt_real;

pub fn obj_string(mesh: &TriangleMesh) -> Result<String> {
    mesh.validate()?;
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", fmt_real(v.x), fmt_real(v.y), fmt_real(v.z));
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            let _ = writeln!(s, "vn {} {} {}", fmt_real(n.x), fmt_real(n.y), fmt_real(n.z));
        }
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        if mesh.normals.is_some() {
            let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
        } else {
            let _ = writeln!(s, "f {a} {b} {c}");
        }
    }
    Ok(s)
}

/// Reads `v`, `vn` and `f` records. Polygons are fan-triangulated and
/// negative (relative) indices are resolved; other records are ignored.
/// Normals are kept only when their count matches the vertex count.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    let bad = |line: usize, msg: &str| Error::Format(format!("obj line {}: {msg}", line + 1));
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some(tag @ ("v" | "vn")) => {
                let xyz: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad(ln, "bad number")))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(bad(ln, "expected three coordinates"));
                }
                let p = Point3::new(xyz[0], xyz[1], xyz[2]);
                if tag == "v" {
                    vertices.push(p);
                } else {
                    normals.push(p);
                }
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| bad(ln, "bad face index"))?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(bad(ln, "face index out of range"));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad(ln, "face with fewer than three vertices"));
                }
                for w in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            _ => {}
        }
    }
    let normals = (!normals.is_empty() && normals.len() == vertices.len()).then_some(normals);
    Ok(TriangleMesh {
        vertices,
        triangles,
        normals,
    })
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    super::write_file(path, obj_string(mesh)?.as_bytes())
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    parse_obj(&std::fs::read_to_string(path)?)
}

pub fn ply_bytes(mesh: &TriangleMesh) -> Result<Vec<u8>> {
    mesh.validate()?;
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    let _ = writeln!(header, "element vertex {}", mesh.vertices.len());
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.normals.is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    let _ = writeln!(header, "element face {}", mesh.triangles.len());
    header.push_str("property list uchar int vertex_indices\nend_header\n");
    let mut out = header.into_bytes();
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v.to_array() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(n) = &mesh.normals {
            for c in n[i].to_array() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    for t in &mesh.triangles {
        out.push(3);
        for &i in t {
            let i = i32::try_from(i).map_err(|_| Error::Format("ply: vertex index exceeds i32".into()))?;
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads the binary little-endian layout written by [`ply_bytes`]: double
/// vertex coordinates with optional normals, triangle faces with `uchar`
/// counts and `int` indices.
pub fn parse_ply(data: &[u8]) -> Result<TriangleMesh> {
    let bad = |msg: &str| Error::Format(format!("ply: {msg}"));
    let end = b"end_header\n";
    let hdr_len = data
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| bad("missing end_header"))?
        + end.len();
    let header = std::str::from_utf8(&data[..hdr_len]).map_err(|_| bad("header is not text"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") || lines.next() != Some("format binary_little_endian 1.0") {
        return Err(bad("only binary little-endian PLY is supported"));
    }
    let (mut n_vertices, mut n_faces) = (None, None);
    let mut vertex_props = Vec::new();
    let mut current = "";
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["element", "vertex", n] => {
                n_vertices = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
                current = "vertex";
            }
            ["element", "face", n] => {
                n_faces = Some(n.parse::<usize>().map_err(|_| bad("bad face count"))?);
                current = "face";
            }
            ["element", ..] => return Err(bad("unsupported element")),
            ["property", "double", name] if current == "vertex" => vertex_props.push(*name),
            ["property", "list", "uchar", "int", _] if current == "face" => {}
            ["property", ..] => return Err(bad(&format!("unsupported property `{line}`"))),
            ["comment", ..] | ["end_header"] | [] => {}
            _ => return Err(bad(&format!("unexpected header line `{line}`"))),
        }
    }
    let with_normals = match vertex_props.as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "nx", "ny", "nz"] => true,
        _ => return Err(bad("vertex properties must be x y z [nx ny nz]")),
    };
    let n_vertices = n_vertices.ok_or_else(|| bad("no vertex element"))?;
    let n_faces = n_faces.unwrap_or(0);

    let mut pos = hdr_len;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = data.get(pos..pos + n).ok_or_else(|| bad("truncated body"))?;
        pos += n;
        Ok(s)
    };
    let mut vertices = Vec::with_capacity(n_vertices);
    let mut normals = Vec::new();
    let stride = if with_normals { 6 } else { 3 };
    for _ in 0..n_vertices {
        let b = take(stride * 8)?;
        let f = |i: usize| f64::from_le_bytes(b[i * 8..i * 8 + 8].try_into().unwrap());
        vertices.push(Point3::new(f(0), f(1), f(2)));
        if with_normals {
            normals.push(Point3::new(f(3), f(4), f(5)));
        }
    }
    let mut triangles = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let count = take(1)?[0] as usize;
        let b = take(count * 4)?;
        let idx: Vec<u32> = (0..count)
            .map(|i| {
                let v = i32::from_le_bytes(b[i * 4..i * 4 + 4].try_into().unwrap());
                u32::try_from(v)
                    .ok()
                    .filter(|&v| (v as usize) < n_vertices)
                    .ok_or_else(|| bad("face index out of range"))
            })
            .collect::<Result<_>>()?;
        if count < 3 {
            return Err(bad("face with fewer than three vertices"));
        }
        for w in 1..count - 1 {
            triangles.push([idx[0], idx[w], idx[w + 1]]);
        }
    }
    if pos != data.len() {
        return Err(bad("trailing bytes after faces"));
    }
    Ok(TriangleMesh {
        vertices,
        triangles,
        normals: with_normals.then_some(normals),
    })
}

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    super::write_file(path, &ply_bytes(mesh)?)
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    parse_ply(&std::fs::read(path)?)
}
