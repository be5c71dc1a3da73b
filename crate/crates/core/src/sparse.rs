//! Compressed sparse row matrices.
//!
//! Matrix-vector and matrix-feature products are the only primitives the
//! spectral filters and sampling operators need.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparse matrix in CSR form with column indices sorted within each row.
#[derive(Debug, Clone)]
pub struct CsrMatrix<S: Scalar> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> CsrMatrix<S> {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, S)]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::dim(format!(
                    "triplet ({r},{c}) outside {rows}x{cols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, S)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<S> = Vec::with_capacity(sorted.len());
        let mut cur_row = 0usize;
        for &(r, c, v) in &sorted {
            while cur_row < r {
                indptr[cur_row + 1] = indices.len();
                cur_row += 1;
            }
            if indices.len() > indptr[cur_row] && *indices.last().unwrap() == c {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
            }
        }
        while cur_row < rows {
            indptr[cur_row + 1] = indices.len();
            cur_row += 1;
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![S::one(); n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[S]) {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (idx, vals) = self.row(r);
            idx.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// y = A x
    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![S::zero(); self.rows];
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            let mut acc = S::zero();
            for (&c, &v) in idx.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// Y = A X with X dense row-major (cols x f).
    pub fn mat_features(&self, x: &[S], f: usize) -> Vec<S> {
        assert_eq!(x.len(), self.cols * f);
        let mut y = vec![S::zero(); self.rows * f];
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            let out = &mut y[r * f..(r + 1) * f];
            for (&c, &v) in idx.iter().zip(vals) {
                let xin = &x[c * f..(c + 1) * f];
                for (o, xi) in out.iter_mut().zip(xin) {
                    *o += v * *xi;
                }
            }
        }
        y
    }

    /// Y += A^T G with G dense row-major (rows x f); used by backward passes.
    pub fn add_transpose_mat_features(&self, g: &[S], f: usize, out: &mut [S]) {
        assert_eq!(g.len(), self.rows * f);
        assert_eq!(out.len(), self.cols * f);
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            let grow = &g[r * f..(r + 1) * f];
            for (&c, &v) in idx.iter().zip(vals) {
                let orow = &mut out[c * f..(c + 1) * f];
                for (o, gi) in orow.iter_mut().zip(grow) {
                    *o += v * *gi;
                }
            }
        }
    }

    /// Row sums, exact in the absence of cancellation-order effects beyond
    /// left-to-right accumulation.
    pub fn row_sums(&self) -> Vec<S> {
        (0..self.rows)
            .map(|r| {
                let (_, vals) = self.row(r);
                vals.iter().copied().sum()
            })
            .collect()
    }

    /// Dense row-major copy; for oracles and small matrices only.
    pub fn to_dense(&self) -> Vec<S> {
        let mut d = vec![S::zero(); self.rows * self.cols];
        for (r, c, v) in self.triplets() {
            d[r * self.cols + c] += v;
        }
        d
    }
}
