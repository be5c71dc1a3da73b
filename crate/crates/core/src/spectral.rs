//! Graph Laplacians and Chebyshev spectral convolution.
//!
//! The production path is the three-term Chebyshev recurrence on vectors;
//! the dense eigendecomposition route exists as the exactness oracle and is
//! capped to small graphs.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::mesh::MeshBase;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::tensor::{ops, Tape, TensorBase};

/// Vertex count cap for the dense eigendecomposition oracle.
pub const EIG_ORACLE_CAP: usize = 200;

/// Non-normalized Laplacian L = D - A with its scaled companion
/// 2L/lambda_max - I whose spectrum lies in [-1, 1].
#[derive(Debug, Clone)]
pub struct LaplacianBundle<S: Scalar> {
    laplacian: Rc<CsrMatrix<S>>,
    lambda_max: S,
    scaled: Rc<CsrMatrix<S>>,
}

impl<S: Scalar> LaplacianBundle<S> {
    /// Build from a symmetric 0/1 adjacency matrix.
    pub fn from_adjacency(adj: &CsrMatrix<S>) -> Result<Self> {
        let m = adj.rows();
        if adj.cols() != m {
            return Err(Error::dim("adjacency must be square"));
        }
        let degrees = adj.row_sums();
        let mut triplets: Vec<(usize, usize, S)> = Vec::with_capacity(adj.nnz() + m);
        for (r, c, v) in adj.triplets() {
            triplets.push((r, c, -v));
        }
        for (i, &d) in degrees.iter().enumerate() {
            triplets.push((i, i, d));
        }
        let laplacian = CsrMatrix::from_triplets(m, m, &triplets)?;
        let lambda_max = power_iteration_lambda_max(&laplacian);

        // 2L/lambda_max - I; a zero Laplacian (edgeless graph) degenerates to -I
        let scale = if lambda_max > S::zero() {
            S::c(2.0) / lambda_max
        } else {
            S::zero()
        };
        let mut striplets: Vec<(usize, usize, S)> = laplacian
            .triplets()
            .map(|(r, c, v)| (r, c, v * scale))
            .collect();
        for i in 0..m {
            striplets.push((i, i, -S::one()));
        }
        let scaled = CsrMatrix::from_triplets(m, m, &striplets)?;
        Ok(LaplacianBundle {
            laplacian: Rc::new(laplacian),
            lambda_max,
            scaled: Rc::new(scaled),
        })
    }

    /// Build from a mesh, requiring a connected vertex graph.
    pub fn from_mesh(mesh: &MeshBase<S>) -> Result<Self> {
        if !mesh.is_connected() {
            return Err(Error::Mesh(
                "mesh graph is disconnected; dataset contract requires connectivity".into(),
            ));
        }
        Self::from_adjacency(mesh.adjacency())
    }

    pub fn laplacian(&self) -> &Rc<CsrMatrix<S>> {
        &self.laplacian
    }

    pub fn lambda_max(&self) -> S {
        self.lambda_max
    }

    pub fn scaled(&self) -> &Rc<CsrMatrix<S>> {
        &self.scaled
    }

    pub fn size(&self) -> usize {
        self.laplacian.rows()
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration
/// (relative tolerance 1e-9, at most 10_000 iterations).
pub fn power_iteration_lambda_max<S: Scalar>(m: &CsrMatrix<S>) -> S {
    let n = m.rows();
    if n == 0 {
        return S::zero();
    }
    // deterministic start vector from a fixed LCG
    let mut state: u64 = 0x9e3779b97f4a7c15;
    let mut x: Vec<S> = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            S::c(((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5)
        })
        .collect();
    let norm = |v: &[S]| v.iter().map(|&a| a * a).sum::<S>().sqrt();
    let n0 = norm(&x);
    for xi in x.iter_mut() {
        *xi = *xi / n0;
    }
    let mut lambda = S::zero();
    for _ in 0..10_000 {
        let y = m.matvec(&x);
        let ny = norm(&y);
        if ny == S::zero() {
            return S::zero(); // x in null space and matrix is PSD-null here
        }
        // Rayleigh quotient with unit x
        let mut rq = S::zero();
        for (a, b) in x.iter().zip(&y) {
            rq += *a * *b;
        }
        // converge well past the 1e-9 contract so downstream identities
        // (e.g. permutation equivariance) hold to ~1e-12
        if (rq - lambda).abs() <= S::c(1e-14) * rq.abs().max(S::one()) {
            return rq;
        }
        lambda = rq;
        x = y;
        for xi in x.iter_mut() {
            *xi = *xi / ny;
        }
    }
    lambda
}

/// Dense symmetric eigendecomposition L = U diag(lambda) U^T.
///
/// Returns `U` row-major (column j is eigenvector j) and the eigenvalues in
/// ascending order. Capped at [`EIG_ORACLE_CAP`] vertices; larger graphs must
/// use the Chebyshev path.
pub fn eigendecompose<S: Scalar>(l: &CsrMatrix<S>) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = l.rows();
    if m > EIG_ORACLE_CAP {
        return Err(Error::config(format!(
            "eigendecomposition oracle capped at {EIG_ORACLE_CAP} vertices (got {m}); \
             use the Chebyshev recurrence path"
        )));
    }
    let mut dense = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (r, c, v) in l.triplets() {
        dense[(r, c)] += v.to_f64_lossy();
    }
    let eig = nalgebra::SymmetricEigen::new(dense);
    // sort ascending by eigenvalue
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
    });
    let mut u = vec![0.0f64; m * m];
    let mut lambda = vec![0.0f64; m];
    for (jnew, &jold) in order.iter().enumerate() {
        lambda[jnew] = eig.eigenvalues[jold];
        for i in 0..m {
            u[i * m + jnew] = eig.eigenvectors[(i, jold)];
        }
    }
    Ok((u, lambda))
}

/// Exact spectral filter: U g(scaled lambda) U^T v, applied channel-wise with
/// one shared coefficient vector. This is the oracle for [`cheb_conv`].
pub fn spectral_filter_exact(
    u: &[f64],
    lambda: &[f64],
    lambda_max: f64,
    v: &[f64],
    fin: usize,
    theta: &[f64],
) -> Result<Vec<f64>> {
    if theta.is_empty() {
        return Err(Error::config("spectral filter requires K >= 1 coefficients"));
    }
    let m = lambda.len();
    if v.len() != m * fin || u.len() != m * m {
        return Err(Error::dim("spectral_filter_exact: size mismatch"));
    }
    // g evaluated on the scaled spectrum via the scalar Chebyshev recurrence
    let g: Vec<f64> = lambda
        .iter()
        .map(|&lam| {
            let x = if lambda_max > 0.0 {
                2.0 * lam / lambda_max - 1.0
            } else {
                -1.0
            };
            let mut acc = theta[0];
            let (mut t_prev, mut t_cur) = (1.0, x);
            for &tk in theta.iter().skip(1) {
                acc += tk * t_cur;
                let t_next = 2.0 * x * t_cur - t_prev;
                t_prev = t_cur;
                t_cur = t_next;
            }
            acc
        })
        .collect();

    // w = U^T v   (spectral coefficients per channel)
    let mut w = vec![0.0f64; m * fin];
    for j in 0..m {
        for i in 0..m {
            let uij = u[i * m + j];
            for f in 0..fin {
                w[j * fin + f] += uij * v[i * fin + f];
            }
        }
    }
    // y = U (g .* w)
    let mut y = vec![0.0f64; m * fin];
    for i in 0..m {
        for j in 0..m {
            let uij = u[i * m + j] * g[j];
            for f in 0..fin {
                y[i * fin + f] += uij * w[j * fin + f];
            }
        }
    }
    Ok(y)
}

/// Chebyshev graph convolution layer: Fin x Fout x K filter coefficients
/// plus a per-output-channel bias.
pub struct ChebConvLayer<S: Scalar> {
    /// Stored K-major as [K, Fin, Fout] so each order slice is contiguous.
    pub theta: TensorBase<S>,
    pub bias: TensorBase<S>,
    pub fin: usize,
    pub fout: usize,
    pub order: usize,
}

impl<S: Scalar> ChebConvLayer<S> {
    pub fn new(theta: TensorBase<S>, bias: TensorBase<S>) -> Result<Self> {
        let s = theta.shape();
        if s.len() != 3 {
            return Err(Error::dim(format!(
                "cheb filter must be [K, Fin, Fout], got {s:?}"
            )));
        }
        if s[0] < 1 {
            return Err(Error::config("cheb filter requires K >= 1"));
        }
        if bias.shape() != vec![s[2]] {
            return Err(Error::dim("cheb bias must have Fout entries"));
        }
        Ok(ChebConvLayer {
            fin: s[1],
            fout: s[2],
            order: s[0],
            theta,
            bias,
        })
    }

    /// Trainable parameter count: Fin * Fout * K filter weights; the bias
    /// adds Fout more and is reported separately.
    pub fn filter_param_count(&self) -> usize {
        self.fin * self.fout * self.order
    }
}

/// Spectral convolution via the three-term recurrence on vertex features.
///
/// T_0 v = v, T_1 v = L~ v, T_k v = 2 L~ T_{k-1} v - T_{k-2} v; the scaled
/// Laplacian is applied as a sparse matrix-feature product and never
/// materialized as a dense polynomial.
pub fn cheb_conv<S: Scalar>(
    tape: &Tape<S>,
    layer: &ChebConvLayer<S>,
    bundle: &LaplacianBundle<S>,
    v: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    let s = v.shape();
    if s.len() != 2 || s[0] != bundle.size() || s[1] != layer.fin {
        return Err(Error::dim(format!(
            "cheb_conv: features {s:?} do not match graph size {} / Fin {}",
            bundle.size(),
            layer.fin
        )));
    }
    let ls = bundle.scaled();
    let theta0 = ops::index_block(tape, &layer.theta, 0)?;
    let mut acc = ops::matmul(tape, v, &theta0)?;
    if layer.order > 1 {
        let mut t_prev = v.clone();
        let mut t_cur = ops::sparse_apply(tape, ls, v)?;
        let theta1 = ops::index_block(tape, &layer.theta, 1)?;
        acc = ops::add(tape, &acc, &ops::matmul(tape, &t_cur, &theta1)?)?;
        for k in 2..layer.order {
            let lt = ops::sparse_apply(tape, ls, &t_cur)?;
            let t_next = ops::sub(tape, &ops::scale(tape, &lt, S::c(2.0)), &t_prev)?;
            let theta_k = ops::index_block(tape, &layer.theta, k)?;
            acc = ops::add(tape, &acc, &ops::matmul(tape, &t_next, &theta_k)?)?;
            t_prev = t_cur;
            t_cur = t_next;
        }
    }
    ops::add_bias(tape, &acc, &layer.bias)
}

/// Random connected graph adjacency: a random spanning tree plus extra
/// random edges. Used by oracle suites and tests.
pub fn random_connected_adjacency<S: Scalar, R: rand::Rng>(
    rng: &mut R,
    m: usize,
    extra_edges: usize,
) -> CsrMatrix<S> {
    assert!(m >= 2);
    let mut edges = std::collections::BTreeSet::new();
    for v in 1..m {
        let u = rng.random_range(0..v);
        edges.insert((u, v));
    }
    for _ in 0..extra_edges {
        let a = rng.random_range(0..m);
        let b = rng.random_range(0..m);
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            edges.insert((lo, hi));
        }
    }
    let mut triplets = Vec::with_capacity(edges.len() * 2);
    for (a, b) in edges {
        triplets.push((a, b, S::one()));
        triplets.push((b, a, S::one()));
    }
    CsrMatrix::from_triplets(m, m, &triplets).expect("valid adjacency")
}
