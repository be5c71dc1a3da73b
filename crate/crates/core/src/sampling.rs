//! Multi-resolution mesh hierarchy: quadric-error-metric simplification for
//! down-sampling and barycentric projection for up-sampling, both exposed as
//! sparse linear maps on vertex features.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::mesh::MeshBase;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::spectral::LaplacianBundle;
use crate::tensor::{ops, Tape, TensorBase};

/// Symmetric 4x4 plane quadric stored as its 10 unique coefficients:
/// [xx, xy, xz, xd, yy, yz, yd, zz, zd, dd].
#[derive(Debug, Clone, Copy)]
pub struct Quadric<S: Scalar> {
    q: [S; 10],
}

impl<S: Scalar> Quadric<S> {
    pub fn zero() -> Self {
        Quadric {
            q: [S::zero(); 10],
        }
    }

    /// Quadric p p^T of the plane n.x + d = 0 with unit n.
    pub fn from_plane(n: [S; 3], d: S) -> Self {
        let (a, b, c) = (n[0], n[1], n[2]);
        Quadric {
            q: [
                a * a,
                a * b,
                a * c,
                a * d,
                b * b,
                b * c,
                b * d,
                c * c,
                c * d,
                d * d,
            ],
        }
    }

    pub fn add(&mut self, other: &Quadric<S>) {
        for (a, b) in self.q.iter_mut().zip(&other.q) {
            *a += *b;
        }
    }

    /// v^T Q v for homogeneous v = (x, y, z, 1).
    pub fn eval(&self, v: [S; 3]) -> S {
        let [x, y, z] = v;
        let q = &self.q;
        let two = S::c(2.0);
        q[0] * x * x
            + two * q[1] * x * y
            + two * q[2] * x * z
            + two * q[3] * x
            + q[4] * y * y
            + two * q[5] * y * z
            + two * q[6] * y
            + q[7] * z * z
            + two * q[8] * z
            + q[9]
    }

    /// Solve for the position minimizing the quadric; `None` when the 3x3
    /// system is singular (|det| < 1e-12).
    pub fn optimal_position(&self) -> Option<[S; 3]> {
        let q = &self.q;
        let a = [
            [q[0], q[1], q[2]],
            [q[1], q[4], q[5]],
            [q[2], q[5], q[7]],
        ];
        let rhs = [-q[3], -q[6], -q[8]];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        if det.abs() < S::c(1e-12) {
            return None;
        }
        let inv_det = S::one() / det;
        let x = (rhs[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (rhs[1] * a[2][2] - a[1][2] * rhs[2])
            + a[0][2] * (rhs[1] * a[2][1] - a[1][1] * rhs[2]))
            * inv_det;
        let y = (a[0][0] * (rhs[1] * a[2][2] - a[1][2] * rhs[2])
            - rhs[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * rhs[2] - rhs[1] * a[2][0]))
            * inv_det;
        let z = (a[0][0] * (a[1][1] * rhs[2] - rhs[1] * a[2][1])
            - a[0][1] * (a[1][0] * rhs[2] - rhs[1] * a[2][0])
            + rhs[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
            * inv_det;
        Some([x, y, z])
    }
}

fn face_plane<S: Scalar>(a: [S; 3], b: [S; 3], c: [S; 3]) -> Option<([S; 3], S)> {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if len < S::c(1e-12) {
        return None; // zero-area face contributes no constraint
    }
    let n = [n[0] / len, n[1] / len, n[2] / len];
    let d = -(n[0] * a[0] + n[1] * a[1] + n[2] * a[2]);
    Some((n, d))
}

/// Result of a simplification run.
pub struct SimplifyOutcome<S: Scalar> {
    pub mesh: MeshBase<S>,
    /// For each coarse vertex, its index in the input mesh.
    pub kept: Vec<usize>,
    /// For each coarse vertex, the set of input vertices merged into it.
    pub origins: Vec<Vec<usize>>,
    /// Quadric cost of each accepted collapse, in acceptance order.
    pub accepted_costs: Vec<S>,
}

/// Cost and optimal evaluation point of collapsing edge (a, b) under the
/// combined quadric. The merged vertex itself is placed at the cheaper
/// endpoint so coarse vertices stay a subset of fine vertices (the
/// down-sampling map is a pure selection).
fn edge_cost<S: Scalar>(q: &Quadric<S>, va: [S; 3], vb: [S; 3]) -> S {
    match q.optimal_position() {
        Some(v) => q.eval(v),
        None => {
            let mid = [
                (va[0] + vb[0]) * S::c(0.5),
                (va[1] + vb[1]) * S::c(0.5),
                (va[2] + vb[2]) * S::c(0.5),
            ];
            q.eval(va).min(q.eval(vb)).min(q.eval(mid))
        }
    }
}

/// Iteratively contract the minimum-cost edge until `target_count` vertices
/// remain. Costs are re-scanned over all live edges after every collapse.
pub fn qem_simplify<S: Scalar>(
    mesh: &MeshBase<S>,
    target_count: usize,
) -> Result<SimplifyOutcome<S>> {
    let m = mesh.vertex_count();
    if target_count < 2 {
        return Err(Error::config("simplification target must be >= 2"));
    }
    if target_count > m {
        return Err(Error::config(format!(
            "target {target_count} exceeds vertex count {m}"
        )));
    }

    let positions: Vec<[S; 3]> = mesh.vertices().to_vec();
    let mut quadrics = vec![Quadric::zero(); m];
    for f in mesh.faces() {
        if let Some((n, d)) = face_plane(positions[f[0]], positions[f[1]], positions[f[2]]) {
            let q = Quadric::from_plane(n, d);
            for &vi in f {
                quadrics[vi].add(&q);
            }
        }
    }

    let mut alive = vec![true; m];
    let mut faces: Vec<[usize; 3]> = mesh.faces().to_vec();
    let mut origins: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    let mut count = m;
    let mut accepted_costs = Vec::with_capacity(m - target_count);

    while count > target_count {
        // live edges from live faces
        let mut edges = std::collections::BTreeSet::new();
        for f in &faces {
            for (x, y) in [(f[0], f[1]), (f[1], f[2]), (f[0], f[2])] {
                let (lo, hi) = if x < y { (x, y) } else { (y, x) };
                edges.insert((lo, hi));
            }
        }
        if edges.is_empty() {
            return Err(Error::Simplify {
                achieved: count,
                target: target_count,
                reason: "no contractible edges remain".into(),
            });
        }
        let mut best: Option<((usize, usize), S)> = None;
        for &(a, b) in &edges {
            let mut q = quadrics[a];
            q.add(&quadrics[b]);
            let cost = edge_cost(&q, positions[a], positions[b]);
            // ties resolved by lexicographic edge order (BTreeSet iteration)
            if best.map_or(true, |(_, c)| cost < c) {
                best = Some(((a, b), cost));
            }
        }
        let ((a, b), cost) = best.unwrap();
        // survivor is the endpoint the combined quadric likes better
        let mut qsum = quadrics[a];
        qsum.add(&quadrics[b]);
        let (survivor, removed) = if qsum.eval(positions[a]) <= qsum.eval(positions[b]) {
            (a, b)
        } else {
            (b, a)
        };
        accepted_costs.push(cost);
        quadrics[survivor] = qsum;
        alive[removed] = false;
        let moved = std::mem::take(&mut origins[removed]);
        origins[survivor].extend(moved);
        count -= 1;

        // remap and drop degenerate / duplicate faces
        let mut seen = std::collections::BTreeSet::new();
        faces = faces
            .into_iter()
            .filter_map(|mut f| {
                for v in f.iter_mut() {
                    if *v == removed {
                        *v = survivor;
                    }
                }
                if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                    return None;
                }
                let mut key = f;
                key.sort_unstable();
                if seen.insert(key) {
                    Some(f)
                } else {
                    None
                }
            })
            .collect();
    }

    // compact indices
    let mut new_index = vec![usize::MAX; m];
    let mut kept = Vec::with_capacity(count);
    let mut coarse_positions = Vec::with_capacity(count);
    let mut coarse_origins = Vec::with_capacity(count);
    for i in 0..m {
        if alive[i] {
            new_index[i] = kept.len();
            kept.push(i);
            coarse_positions.push(positions[i]);
            coarse_origins.push(origins[i].clone());
        }
    }
    let coarse_faces: Vec<[usize; 3]> = faces
        .iter()
        .map(|f| [new_index[f[0]], new_index[f[1]], new_index[f[2]]])
        .collect();
    let coarse = MeshBase::new(coarse_positions, coarse_faces)?;
    if !coarse.faces().is_empty() && !coarse.is_connected() {
        return Err(Error::Simplify {
            achieved: count,
            target: target_count,
            reason: "result disconnected".into(),
        });
    }
    Ok(SimplifyOutcome {
        mesh: coarse,
        kept,
        origins: coarse_origins,
        accepted_costs,
    })
}

/// Closest point on triangle (a, b, c) to p, as clamped barycentric weights.
pub fn closest_point_barycentric<S: Scalar>(
    p: [S; 3],
    a: [S; 3],
    b: [S; 3],
    c: [S; 3],
) -> ([S; 3], S) {
    let sub = |x: [S; 3], y: [S; 3]| [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    let dot = |x: [S; 3], y: [S; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];

    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    let zero = S::zero();
    let one = S::one();

    let bary = 'bary: {
        if d1 <= zero && d2 <= zero {
            break 'bary [one, zero, zero];
        }
        let bp = sub(p, b);
        let d3 = dot(ab, bp);
        let d4 = dot(ac, bp);
        if d3 >= zero && d4 <= d3 {
            break 'bary [zero, one, zero];
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= zero && d1 >= zero && d3 <= zero {
            let t = d1 / (d1 - d3);
            break 'bary [one - t, t, zero];
        }
        let cp = sub(p, c);
        let d5 = dot(ab, cp);
        let d6 = dot(ac, cp);
        if d6 >= zero && d5 <= d6 {
            break 'bary [zero, zero, one];
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= zero && d2 >= zero && d6 <= zero {
            let t = d2 / (d2 - d6);
            break 'bary [one - t, zero, t];
        }
        let va = d3 * d6 - d5 * d4;
        if va <= zero && (d4 - d3) >= zero && (d5 - d6) >= zero {
            let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            break 'bary [zero, one - t, t];
        }
        let denom = one / (va + vb + vc);
        let v = vb * denom;
        let w = vc * denom;
        [one - v - w, v, w]
    };

    let q = [
        bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
        bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        bary[0] * a[2] + bary[1] * b[2] + bary[2] * c[2],
    ];
    let d = sub(p, q);
    (bary, dot(d, d))
}

/// Mesh pyramid with selection down-maps and barycentric up-maps.
pub struct SamplingHierarchy<S: Scalar> {
    // fields private; rebuilt only through build_hierarchy or the sidecar
    // loader so the Laplacian set always matches the meshes

    levels: Vec<MeshBase<S>>,
    down_maps: Vec<Rc<CsrMatrix<S>>>,
    up_maps: Vec<Rc<CsrMatrix<S>>>,
    laplacians: Vec<Option<LaplacianBundle<S>>>,
    stride: usize,
}

impl<S: Scalar> std::fmt::Debug for SamplingHierarchy<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SamplingHierarchy {{ counts: {:?}, stride: {} }}",
            self.level_counts(),
            self.stride
        )
    }
}

impl<S: Scalar> SamplingHierarchy<S> {
    pub fn levels(&self) -> &[MeshBase<S>] {
        &self.levels
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|m| m.vertex_count()).collect()
    }

    /// D_l: maps level-l features to level-(l+1); each row selects one fine vertex.
    pub fn down_map(&self, l: usize) -> &Rc<CsrMatrix<S>> {
        &self.down_maps[l]
    }

    /// Q_l: maps level-(l+1) features back to level-l.
    pub fn up_map(&self, l: usize) -> &Rc<CsrMatrix<S>> {
        &self.up_maps[l]
    }

    pub fn laplacian(&self, l: usize) -> Option<&LaplacianBundle<S>> {
        self.laplacians[l].as_ref()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub(crate) fn from_parts(
        levels: Vec<MeshBase<S>>,
        down_maps: Vec<Rc<CsrMatrix<S>>>,
        up_maps: Vec<Rc<CsrMatrix<S>>>,
        stride: usize,
    ) -> Result<Self> {
        let laplacians = build_level_laplacians(&levels)?;
        Ok(SamplingHierarchy {
            levels,
            down_maps,
            up_maps,
            laplacians,
            stride,
        })
    }
}

fn build_level_laplacians<S: Scalar>(
    levels: &[MeshBase<S>],
) -> Result<Vec<Option<LaplacianBundle<S>>>> {
    let mut laplacians = Vec::with_capacity(levels.len());
    for (l, mesh) in levels.iter().enumerate() {
        if mesh.faces().is_empty() || !mesh.is_connected() {
            // only tolerable at the coarsest level, where no convolution runs
            if l + 1 == levels.len() {
                laplacians.push(None);
                continue;
            }
            return Err(Error::Mesh(format!(
                "level {l} mesh lost connectivity during simplification"
            )));
        }
        laplacians.push(Some(LaplacianBundle::from_mesh(mesh)?));
    }
    Ok(laplacians)
}

/// Build the up-map row for one discarded fine vertex: barycentric weights
/// of its closest point over the coarse mesh, with edge/vertex projections
/// appearing as zero weights. Falls back to the nearest coarse vertex when
/// the coarse mesh has no faces left.
fn project_row<S: Scalar>(
    p: [S; 3],
    coarse: &MeshBase<S>,
) -> Vec<(usize, S)> {
    let verts = coarse.vertices();
    if !coarse.faces().is_empty() {
        let mut best: Option<(S, usize, [S; 3])> = None;
        for (fi, f) in coarse.faces().iter().enumerate() {
            let (bary, d2) =
                closest_point_barycentric(p, verts[f[0]], verts[f[1]], verts[f[2]]);
            // ties broken by lowest face index (strict <)
            if best.map_or(true, |(bd, _, _)| d2 < bd) {
                best = Some((d2, fi, bary));
            }
        }
        let (_, fi, bary) = best.unwrap();
        let f = coarse.faces()[fi];
        return vec![(f[0], bary[0]), (f[1], bary[1]), (f[2], bary[2])];
    }
    // faceless coarse level: copy from the nearest coarse vertex
    let mut best = (S::infinity(), 0usize);
    for (i, v) in verts.iter().enumerate() {
        let d2 = (p[0] - v[0]) * (p[0] - v[0])
            + (p[1] - v[1]) * (p[1] - v[1])
            + (p[2] - v[2]) * (p[2] - v[2]);
        if d2 < best.0 {
            best = (d2, i);
        }
    }
    vec![(best.1, S::one())]
}

/// Build the full hierarchy by repeated QEM simplification with level-l
/// vertex count ceil(count_{l-1} / stride).
pub fn build_hierarchy<S: Scalar>(
    mesh: &MeshBase<S>,
    stride: usize,
    levels: usize,
) -> Result<SamplingHierarchy<S>> {
    if stride < 2 {
        return Err(Error::config("hierarchy stride must be >= 2"));
    }
    let mut counts = vec![mesh.vertex_count()];
    for _ in 0..levels {
        counts.push(counts.last().unwrap().div_ceil(stride));
    }
    if *counts.last().unwrap() < 2 {
        return Err(Error::config(format!(
            "mesh too small: {} vertices leave fewer than 2 at the coarsest of {} levels \
             (minimum is {})",
            mesh.vertex_count(),
            levels,
            2 * stride.pow(levels as u32)
        )));
    }

    let mut meshes = vec![mesh.clone()];
    let mut down_maps = Vec::with_capacity(levels);
    let mut up_maps = Vec::with_capacity(levels);

    for l in 0..levels {
        let fine = &meshes[l];
        let outcome = qem_simplify(fine, counts[l + 1])?;
        let fine_count = fine.vertex_count();
        let coarse_count = outcome.mesh.vertex_count();

        // selection down-map
        let dtrip: Vec<(usize, usize, S)> = outcome
            .kept
            .iter()
            .enumerate()
            .map(|(coarse_i, &fine_i)| (coarse_i, fine_i, S::one()))
            .collect();
        let d = CsrMatrix::from_triplets(coarse_count, fine_count, &dtrip)?;

        // barycentric up-map
        let mut coarse_of_fine = vec![usize::MAX; fine_count];
        for (coarse_i, &fine_i) in outcome.kept.iter().enumerate() {
            coarse_of_fine[fine_i] = coarse_i;
        }
        let mut qtrip: Vec<(usize, usize, S)> = Vec::new();
        for fi in 0..fine_count {
            if coarse_of_fine[fi] != usize::MAX {
                qtrip.push((fi, coarse_of_fine[fi], S::one()));
            } else {
                qtrip.extend(
                    project_row(fine.vertices()[fi], &outcome.mesh)
                        .into_iter()
                        .map(|(ci, w)| (fi, ci, w)),
                );
            }
        }
        let q = CsrMatrix::from_triplets(fine_count, coarse_count, &qtrip)?;

        down_maps.push(Rc::new(d));
        up_maps.push(Rc::new(q));
        meshes.push(outcome.mesh);
    }

    SamplingHierarchy::from_parts(meshes, down_maps, up_maps, stride)
}

/// Differentiable linear up-sampling of vertex features by Q_l.
pub fn upsample<S: Scalar>(
    tape: &Tape<S>,
    q: &Rc<CsrMatrix<S>>,
    features: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    ops::sparse_apply(tape, q, features)
}
