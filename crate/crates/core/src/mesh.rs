//! Triangle meshes with derived adjacency.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Triangle mesh: vertex coordinates, faces, and the 0/1 adjacency derived
/// from the face edges. Adjacency is never read from files; it is rebuilt
/// from the faces on construction.
#[derive(Debug, Clone)]
pub struct MeshBase<S: Scalar> {
    vertices: Vec<[S; 3]>,
    faces: Vec<[usize; 3]>,
    adjacency: CsrMatrix<S>,
}

impl<S: Scalar> MeshBase<S> {
    pub fn new(vertices: Vec<[S; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let m = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f[0] >= m || f[1] >= m || f[2] >= m {
                return Err(Error::Mesh(format!(
                    "face {fi} references vertex out of range (mesh has {m} vertices)"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Mesh(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        let adjacency = adjacency_from_faces(m, &faces)?;
        Ok(MeshBase {
            vertices,
            faces,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[S; 3]] {
        &self.vertices
    }

    pub fn vertices_mut(&mut self) -> &mut [[S; 3]] {
        &mut self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn adjacency(&self) -> &CsrMatrix<S> {
        &self.adjacency
    }

    /// Same connectivity, new coordinates.
    pub fn with_vertices(&self, vertices: Vec<[S; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Mesh(format!(
                "vertex count changed: {} -> {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(MeshBase {
            vertices,
            faces: self.faces.clone(),
            adjacency: self.adjacency.clone(),
        })
    }

    /// Flat row-major M x 3 coordinate buffer.
    pub fn coords_flat(&self) -> Vec<S> {
        self.vertices.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn is_connected(&self) -> bool {
        let m = self.vertex_count();
        if m == 0 {
            return false;
        }
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut visited = 1usize;
        while let Some(v) = stack.pop() {
            let (idx, _) = self.adjacency.row(v);
            for &u in idx {
                if !seen[u] {
                    seen[u] = true;
                    visited += 1;
                    stack.push(u);
                }
            }
        }
        visited == m
    }

    /// True when the two meshes share identical faces.
    pub fn same_connectivity(&self, other: &Self) -> bool {
        self.faces == other.faces
    }
}

/// Symmetric 0/1 adjacency from face edges; diagonal is empty.
pub fn adjacency_from_faces<S: Scalar>(
    m: usize,
    faces: &[[usize; 3]],
) -> Result<CsrMatrix<S>> {
    let mut edges = std::collections::BTreeSet::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[0], f[2])] {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            edges.insert((lo, hi));
        }
    }
    let mut triplets = Vec::with_capacity(edges.len() * 2);
    for (a, b) in edges {
        triplets.push((a, b, S::one()));
        triplets.push((b, a, S::one()));
    }
    CsrMatrix::from_triplets(m, m, &triplets)
}

/// Unit icosahedron subdivided `level` times and projected to the sphere of
/// the given radius. Vertex counts: level 0 -> 12, 1 -> 42, 2 -> 162, 3 -> 642.
pub fn icosphere<S: Scalar>(level: usize, radius: S) -> MeshBase<S> {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let base: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut verts: Vec<[f64; 3]> = base;

    for _ in 0..level {
        let mut midpoint: std::collections::BTreeMap<(usize, usize), usize> =
            std::collections::BTreeMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            if let Some(&i) = midpoint.get(&key) {
                return i;
            }
            let va = verts[a];
            let vb = verts[b];
            let m = [
                (va[0] + vb[0]) / 2.0,
                (va[1] + vb[1]) / 2.0,
                (va[2] + vb[2]) / 2.0,
            ];
            verts.push(m);
            let i = verts.len() - 1;
            midpoint.insert(key, i);
            i
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            new_faces.push([f[0], ab, ca]);
            new_faces.push([f[1], bc, ab]);
            new_faces.push([f[2], ca, bc]);
            new_faces.push([ab, bc, ca]);
        }
        faces = new_faces;
    }

    let vertices: Vec<[S; 3]> = verts
        .into_iter()
        .map(|v| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [
                S::c(v[0] / n) * radius,
                S::c(v[1] / n) * radius,
                S::c(v[2] / n) * radius,
            ]
        })
        .collect();
    MeshBase::new(vertices, faces).expect("icosphere construction is well-formed")
}

/// Triangulated torus grid with `nu * nv` vertices; handy for meshes whose
/// vertex count must be an exact power-of-two multiple.
pub fn torus<S: Scalar>(nu: usize, nv: usize, major: S, minor: S) -> MeshBase<S> {
    assert!(nu >= 3 && nv >= 3);
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let r = major + minor * S::c(v.cos());
            vertices.push([
                r * S::c(u.cos()),
                r * S::c(u.sin()),
                minor * S::c(v.sin()),
            ]);
        }
    }
    let mut faces = Vec::with_capacity(nu * nv * 2);
    for i in 0..nu {
        for j in 0..nv {
            let a = i * nv + j;
            let b = ((i + 1) % nu) * nv + j;
            let c = ((i + 1) % nu) * nv + (j + 1) % nv;
            let d = i * nv + (j + 1) % nv;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    MeshBase::new(vertices, faces).expect("torus construction is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_vertex_counts() {
        assert_eq!(icosphere::<f64>(0, 1.0).vertex_count(), 12);
        assert_eq!(icosphere::<f64>(1, 1.0).vertex_count(), 42);
        assert_eq!(icosphere::<f64>(2, 1.0).vertex_count(), 162);
        assert_eq!(icosphere::<f64>(3, 1.0).vertex_count(), 642);
    }

    #[test]
    fn icosphere_is_connected_and_symmetric() {
        let m = icosphere::<f64>(1, 1.0);
        assert!(m.is_connected());
        // A = A^T and zero diagonal
        let a = m.adjacency();
        for (r, c, v) in a.triplets() {
            assert_ne!(r, c);
            assert_eq!(v, 1.0);
            let (idx, _) = a.row(c);
            assert!(idx.contains(&r));
        }
    }

    #[test]
    fn torus_has_exact_count() {
        let m = torus::<f64>(32, 32, 2.0, 0.7);
        assert_eq!(m.vertex_count(), 1024);
        assert!(m.is_connected());
    }

    #[test]
    fn degenerate_face_rejected() {
        let verts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(MeshBase::new(verts.clone(), vec![[0, 1, 1]]).is_err());
        assert!(MeshBase::new(verts, vec![[0, 1, 3]]).is_err());
    }
}
