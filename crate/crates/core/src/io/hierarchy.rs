//! Hierarchy sidecar: the mesh pyramid plus its down/up sparse maps, keyed
//! to the template mesh by content hash so a stale sidecar cannot be applied
//! to a different template.

use std::path::Path;
use std::rc::Rc;

use sha2::{Digest, Sha256};

use super::off::{format_mesh, parse_off_str};
use super::{atomic_write, parse_err};
use crate::error::{Error, Result};
use crate::mesh::MeshBase;
use crate::sampling::SamplingHierarchy;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

const MAGIC: &str = "INSTANET-HIER 1";

/// Content hash over vertex coordinates and face indices.
pub fn mesh_hash<S: Scalar>(mesh: &MeshBase<S>) -> String {
    let mut hasher = Sha256::new();
    for v in mesh.coords_flat() {
        hasher.update(v.to_f64_lossy().to_le_bytes());
    }
    for f in mesh.faces() {
        for &i in f {
            hasher.update((i as u64).to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn push_map<S: Scalar>(out: &mut String, kind: &str, level: usize, m: &CsrMatrix<S>) {
    let trips: Vec<(usize, usize, S)> = m.triplets().collect();
    out.push_str(&format!(
        "{kind} {level} {} {} {}\n",
        m.rows(),
        m.cols(),
        trips.len()
    ));
    for (r, c, v) in trips {
        out.push_str(&format!("{r} {c} {:.16e}\n", v.to_f64_lossy()));
    }
}

pub fn save<S: Scalar>(h: &SamplingHierarchy<S>, path: &Path) -> Result<()> {
    let mut out = format!("{MAGIC}\n");
    out.push_str(&format!("template_sha256 {}\n", mesh_hash(&h.levels()[0])));
    out.push_str(&format!("stride {}\n", h.stride()));
    out.push_str(&format!("levels {}\n", h.depth()));
    for (l, mesh) in h.levels().iter().enumerate() {
        out.push_str(&format!("mesh {l}\n"));
        out.push_str(&format_mesh(mesh));
    }
    for l in 0..h.depth() - 1 {
        push_map(&mut out, "down", l, h.down_map(l));
        push_map(&mut out, "up", l, h.up_map(l));
    }
    atomic_write(path, out.as_bytes())
}

/// Load a sidecar and verify it belongs to `template`.
pub fn load<S: Scalar>(path: &Path, template: &MeshBase<S>) -> Result<SamplingHierarchy<S>> {
    let (h, stored_hash) = load_any(path)?;
    let expect = mesh_hash(template);
    if stored_hash != expect {
        return Err(Error::config(format!(
            "hierarchy sidecar was built for a different template mesh \
             (hash {stored_hash} vs {expect})"
        )));
    }
    Ok(h)
}

/// Load a sidecar without an external template, returning the stored
/// template hash for the caller to cross-check (e.g. against a checkpoint).
pub fn load_any<S: Scalar>(path: &Path) -> Result<(SamplingHierarchy<S>, String)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("unexpected end of file, wanted {what}")))
    };

    let (ln, magic) = next("magic")?;
    if magic != MAGIC {
        return Err(parse_err(path, ln, format!("bad magic {magic:?}")));
    }
    let field = |line: &str, key: &str, ln: usize| -> Result<String> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| parse_err(path, ln, format!("expected {key}")))
    };
    let (ln, l) = next("template hash")?;
    let stored_hash = field(l, "template_sha256", ln)?;
    let (ln, l) = next("stride")?;
    let stride: usize = field(l, "stride", ln)?
        .parse()
        .map_err(|e| parse_err(path, ln, format!("bad stride: {e}")))?;
    let (ln, l) = next("levels")?;
    let depth: usize = field(l, "levels", ln)?
        .parse()
        .map_err(|e| parse_err(path, ln, format!("bad level count: {e}")))?;
    if depth < 2 {
        return Err(parse_err(path, ln, "hierarchy needs at least 2 levels"));
    }

    let mut levels: Vec<MeshBase<S>> = Vec::with_capacity(depth);
    for expect_l in 0..depth {
        let (ln, l) = next("mesh record")?;
        let idx: usize = field(l, "mesh", ln)?
            .parse()
            .map_err(|e| parse_err(path, ln, format!("bad mesh index: {e}")))?;
        if idx != expect_l {
            return Err(parse_err(path, ln, format!("mesh records out of order at {idx}")));
        }
        // the OFF block is self-delimiting: header, counts, nv + nf lines
        let (hln, header) = next("OFF header")?;
        if header.trim() != "OFF" {
            return Err(parse_err(path, hln, "expected inline OFF block"));
        }
        let (cln, counts_line) = next("OFF counts")?;
        let counts: Vec<usize> = counts_line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, cln, format!("bad counts: {e}")))?;
        if counts.len() < 2 {
            return Err(parse_err(path, cln, "counts line needs two entries"));
        }
        let mut block = format!("OFF\n{counts_line}\n");
        for _ in 0..counts[0] + counts[1] {
            let (_, l) = next("OFF body line")?;
            block.push_str(l);
            block.push('\n');
        }
        levels.push(parse_off_str(&block, path)?);
    }

    let mut down_maps = Vec::with_capacity(depth - 1);
    let mut up_maps = Vec::with_capacity(depth - 1);
    for l in 0..depth - 1 {
        for kind in ["down", "up"] {
            let (ln, line) = next("map record")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 || parts[0] != kind || parts[1] != l.to_string() {
                return Err(parse_err(path, ln, format!("expected `{kind} {l} rows cols nnz`")));
            }
            let rows: usize = parts[2].parse().map_err(|e| parse_err(path, ln, format!("{e}")))?;
            let cols: usize = parts[3].parse().map_err(|e| parse_err(path, ln, format!("{e}")))?;
            let nnz: usize = parts[4].parse().map_err(|e| parse_err(path, ln, format!("{e}")))?;
            let mut trips = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let (tln, tl) = next("triplet")?;
                let t: Vec<&str> = tl.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(path, tln, "triplet needs row, col, value"));
                }
                let r: usize = t[0].parse().map_err(|e| parse_err(path, tln, format!("{e}")))?;
                let c: usize = t[1].parse().map_err(|e| parse_err(path, tln, format!("{e}")))?;
                let v: f64 = t[2].parse().map_err(|e| parse_err(path, tln, format!("{e}")))?;
                trips.push((r, c, S::c(v)));
            }
            let m = CsrMatrix::from_triplets(rows, cols, &trips)?;
            if kind == "down" {
                down_maps.push(Rc::new(m));
            } else {
                up_maps.push(Rc::new(m));
            }
        }
    }

    let h = SamplingHierarchy::from_parts(levels, down_maps, up_maps, stride)?;
    Ok((h, stored_hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use crate::sampling::build_hierarchy;

    #[test]
    fn sidecar_round_trip() {
        let mesh = icosphere::<f64>(2, 1.0);
        let h = build_hierarchy(&mesh, 3, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hier.txt");
        save(&h, &p).unwrap();
        let back = load(&p, &mesh).unwrap();
        assert_eq!(back.level_counts(), h.level_counts());
        assert_eq!(back.stride(), 3);
        for l in 0..4 {
            let a: Vec<_> = h.up_map(l).triplets().collect();
            let b: Vec<_> = back.up_map(l).triplets().collect();
            assert_eq!(a, b); // bitwise values via 17-digit formatting
            assert_eq!(
                back.levels()[l + 1].coords_flat(),
                h.levels()[l + 1].coords_flat()
            );
        }
    }

    #[test]
    fn wrong_template_rejected() {
        let mesh = icosphere::<f64>(2, 1.0);
        let h = build_hierarchy(&mesh, 3, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hier.txt");
        save(&h, &p).unwrap();
        let other = icosphere::<f64>(2, 1.1);
        let err = load(&p, &other).unwrap_err();
        assert!(err.to_string().contains("different template"));
    }
}
