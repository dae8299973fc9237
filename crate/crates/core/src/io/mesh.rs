use std::fs;
use std::path::Path;

use crate::cloud::TriangleMesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Loads an OBJ or ASCII-PLY mesh, chosen by file extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    if ext != "obj" && ext != "ply" {
        return Err(Error::UnsupportedFormat(format!(
            "{}: expected .obj or .ply",
            path.display()
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if ext == "obj" {
        parse_obj(&text, path)
    } else {
        parse_ply_mesh(&text, path)
    }
}

fn parse_f64(tok: Option<&str>, path: &Path, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, "missing coordinate"))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, "non-finite coordinate"));
    }
    Ok(v)
}

/// Polygons are fan-triangulated. Indices are 1-based; negative indices
/// count back from the most recent vertex.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), path, line)?;
                let y = parse_f64(toks.next(), path, line)?;
                let z = parse_f64(toks.next(), path, line)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(path, line, format!("invalid face index `{tok}`")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(Error::parse(
                            path,
                            line,
                            format!("face index {i} out of range (1..={})", vertices.len()),
                        ));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::parse(path, line, "face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriangleMesh { vertices, faces })
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
}

pub(super) struct PlyHeader {
    elements: Vec<Element>,
    body_start: usize,
}

pub(super) fn parse_ply_header(lines: &[&str], path: &Path) -> Result<PlyHeader> {
    if lines.first().map(|l| l.trim()) != Some("ply") {
        return Err(Error::parse(path, 1, "missing `ply` magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    for (i, raw) in lines.iter().enumerate().skip(1) {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", ..] => {}
            ["format", other, ..] => {
                return Err(Error::UnsupportedFormat(format!(
                    "{}: PLY format `{other}` (only ascii is supported)",
                    path.display()
                )))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, line, "invalid element count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, line, "property before element"))?;
                el.properties.push(name.to_string());
                el.has_list = true;
            }
            ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, line, "property before element"))?;
                el.properties.push(name.to_string());
            }
            ["end_header"] => {
                return Ok(PlyHeader {
                    elements,
                    body_start: i + 1,
                })
            }
            _ => return Err(Error::parse(path, line, format!("unexpected header line `{raw}`"))),
        }
    }
    Err(Error::parse(path, lines.len(), "missing end_header"))
}

/// Vertex rows as `(x, y, z, optional normal)` plus the raw face rows.
pub(super) struct PlyBody {
    pub vertices: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub faces: Vec<[usize; 3]>,
}

pub(super) fn parse_ply_body(text: &str, path: &Path) -> Result<PlyBody> {
    let lines: Vec<&str> = text.lines().collect();
    let header = parse_ply_header(&lines, path)?;
    let mut cursor = header.body_start;
    let mut body = PlyBody {
        vertices: Vec::new(),
        normals: None,
        faces: Vec::new(),
    };
    for el in &header.elements {
        let col = |name: &str| el.properties.iter().position(|p| p == name);
        for _ in 0..el.count {
            let line = cursor + 1;
            let raw = lines
                .get(cursor)
                .ok_or_else(|| Error::parse(path, line, format!("unexpected end of file in `{}`", el.name)))?;
            cursor += 1;
            let toks: Vec<&str> = raw.split_whitespace().collect();
            if el.name == "vertex" {
                let get = |name: &str| -> Result<f64> {
                    let c = col(name).ok_or_else(|| Error::parse(path, line, format!("vertex has no `{name}`")))?;
                    parse_f64(toks.get(c).copied(), path, line)
                };
                body.vertices.push(Vec3::new(get("x")?, get("y")?, get("z")?));
                if col("nx").is_some() && col("ny").is_some() && col("nz").is_some() {
                    let n = Vec3::new(get("nx")?, get("ny")?, get("nz")?);
                    body.normals.get_or_insert_with(Vec::new).push(n);
                }
            } else if el.name == "face" && el.has_list {
                let count: usize = toks
                    .first()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse(path, line, "invalid face row"))?;
                if count < 3 || toks.len() < 1 + count {
                    return Err(Error::parse(path, line, "face row has too few indices"));
                }
                let mut idx = Vec::with_capacity(count);
                for t in &toks[1..=count] {
                    let i: usize = t
                        .parse()
                        .map_err(|_| Error::parse(path, line, format!("invalid face index `{t}`")))?;
                    if i >= body.vertices.len() {
                        return Err(Error::parse(
                            path,
                            line,
                            format!("face index {i} out of range (0..{})", body.vertices.len()),
                        ));
                    }
                    idx.push(i);
                }
                for k in 1..count - 1 {
                    body.faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
        }
    }
    Ok(body)
}

pub fn parse_ply_mesh(text: &str, path: &Path) -> Result<TriangleMesh> {
    let body = parse_ply_body(text, path)?;
    Ok(TriangleMesh {
        vertices: body.vertices,
        faces: body.faces,
    })
}

pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_OBJ: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

    const TETRA_PLY: &str = "\
ply
format ascii 1.0
comment tetrahedron
element vertex 4
property float x
property float y
property float z
element face 4
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
0 0 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
";

    #[test]
    fn cube_obj() {
        let m = parse_obj(CUBE_OBJ, Path::new("cube.obj")).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.faces.len(), 12);
        assert!((m.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn obj_out_of_range_index_reports_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", Path::new("bad.obj")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn obj_quads_and_slashes() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n", Path::new("q.obj")).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn tetra_ply() {
        let m = parse_ply_mesh(TETRA_PLY, Path::new("t.ply")).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.len(), 4);
    }

    #[test]
    fn binary_ply_is_unsupported() {
        let text = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(matches!(
            parse_ply_mesh(text, Path::new("b.ply")),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn unknown_extension_is_unsupported() {
        assert!(matches!(load_mesh("mesh.stl"), Err(Error::UnsupportedFormat(_))));
    }
}
