//! OFF is the canonical mesh format; OBJ is supported read-only.

use std::path::Path;

use super::{atomic_write, parse_err};
use crate::error::Result;
use crate::mesh::MeshBase;
use crate::scalar::Scalar;

/// 17 significant digits round-trips every finite f64 exactly.
pub fn format_mesh<S: Scalar>(mesh: &MeshBase<S>) -> String {
    let mut out = String::from("OFF\n");
    out.push_str(&format!(
        "{} {} 0\n",
        mesh.vertex_count(),
        mesh.faces().len()
    ));
    for v in mesh.vertices() {
        out.push_str(&format!(
            "{:.16e} {:.16e} {:.16e}\n",
            v[0].to_f64_lossy(),
            v[1].to_f64_lossy(),
            v[2].to_f64_lossy()
        ));
    }
    for f in mesh.faces() {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    out
}

pub fn write_off<S: Scalar>(mesh: &MeshBase<S>, path: &Path) -> Result<()> {
    atomic_write(path, format_mesh(mesh).as_bytes())
}

pub fn parse_off_str<S: Scalar>(text: &str, path: &Path) -> Result<MeshBase<S>> {
    // (line number, content) with comments and blanks skipped
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty file"))?;
    if header != "OFF" {
        return Err(parse_err(path, ln, format!("expected OFF header, got {header:?}")));
    }
    let (ln, counts) = lines
        .next()
        .ok_or_else(|| parse_err(path, ln, "missing counts line"))?;
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(path, ln, format!("bad counts line: {e}")))?;
    if nums.len() < 2 {
        return Err(parse_err(path, ln, "counts line needs vertex and face counts"));
    }
    let (nv, nf) = (nums[0], nums[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "unexpected end of file in vertex list"))?;
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, ln, format!("bad vertex: {e}")))?;
        if coords.len() != 3 {
            return Err(parse_err(path, ln, format!("vertex needs 3 coords, got {}", coords.len())));
        }
        vertices.push([S::c(coords[0]), S::c(coords[1]), S::c(coords[2])]);
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "unexpected end of file in face list"))?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, ln, format!("bad face: {e}")))?;
        if idx.len() != 4 || idx[0] != 3 {
            return Err(parse_err(path, ln, "only triangle faces are supported"));
        }
        if idx[1..].iter().any(|&i| i >= nv) {
            return Err(parse_err(path, ln, format!("face index out of range (mesh has {nv} vertices)")));
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }

    MeshBase::new(vertices, faces)
        .map_err(|e| parse_err(path, 0, format!("invalid mesh: {e}")))
}

pub fn parse_off<S: Scalar>(path: &Path) -> Result<MeshBase<S>> {
    let text = std::fs::read_to_string(path)?;
    parse_off_str(&text, path)
}

/// Minimal OBJ reader: `v x y z` and triangular `f` records (1-based,
/// `v/vt/vn` references allowed); everything else is ignored.
pub fn parse_obj<S: Scalar>(path: &Path) -> Result<MeshBase<S>> {
    let text = std::fs::read_to_string(path)?;
    let mut vertices: Vec<[S; 3]> = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let coords: Vec<f64> = tok
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(path, ln, format!("bad vertex: {e}")))?;
                if coords.len() < 3 {
                    return Err(parse_err(path, ln, "vertex needs 3 coords"));
                }
                vertices.push([S::c(coords[0]), S::c(coords[1]), S::c(coords[2])]);
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or(t);
                        first.parse::<isize>().map_err(|e| {
                            parse_err(path, ln, format!("bad face index: {e}"))
                        })
                    })
                    .collect::<Result<Vec<isize>>>()?
                    .iter()
                    .map(|&v| {
                        if v > 0 {
                            Ok(v as usize - 1)
                        } else {
                            Err(parse_err(path, ln, "negative face indices unsupported"))
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(path, ln, "only triangle faces are supported"));
                }
                if idx.iter().any(|&v| v >= vertices.len()) {
                    return Err(parse_err(path, ln, "face index out of range"));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    MeshBase::new(vertices, faces)
        .map_err(|e| parse_err(path, 0, format!("invalid mesh: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn tetrahedron_round_trip() {
        let verts: Vec<[f64; 3]> = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let faces = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
        let mesh = MeshBase::new(verts, faces).unwrap();
        let text = format_mesh(&mesh);
        let back: MeshBase<f64> = parse_off_str(&text, Path::new("test.off")).unwrap();
        assert_eq!(back.coords_flat(), mesh.coords_flat());
        assert_eq!(back.faces(), mesh.faces());
    }

    #[test]
    fn icosphere_round_trip_is_coordinate_exact() {
        let mesh = icosphere::<f64>(2, 1.0);
        let back: MeshBase<f64> =
            parse_off_str(&format_mesh(&mesh), Path::new("ico.off")).unwrap();
        assert_eq!(back.coords_flat(), mesh.coords_flat()); // bitwise
    }

    #[test]
    fn out_of_range_face_reports_line() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n";
        let err = parse_off_str::<f64>(text, Path::new("bad.off")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 6"), "{msg}");
        assert!(msg.contains("out of range"), "{msg}");
    }

    #[test]
    fn non_triangle_face_rejected() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n";
        assert!(parse_off_str::<f64>(text, Path::new("quad.off")).is_err());
    }

    #[test]
    fn obj_read_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tri.obj");
        std::fs::write(&p, "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n").unwrap();
        let mesh: MeshBase<f64> = parse_obj(&p).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }
}
