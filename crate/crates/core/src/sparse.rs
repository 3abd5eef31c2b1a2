//! Compressed sparse row matrices with a cached transpose.
//!
//! Both `A x` and `Aᵀ x` are computed row-wise over a CSR layout, so each
//! output entry is a fixed-order sum and results do not depend on how rows are
//! distributed across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row count above which matvecs are split across the rayon pool.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) outside a {nrows}x{ncols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("duplicate entry at ({row}, {col})")]
    Duplicate { row: usize, col: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Csr {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let row = |i: usize| -> f64 {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            self.col_idx[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&j, &a)| a * x[j])
                .sum()
        };
        if y.len() >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        }
    }
}

/// Sparse real matrix, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    rows: Csr,
    // CSR of the transpose, i.e. column access to the original.
    cols: Csr,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets in any order. Duplicates are
    /// rejected rather than summed; explicit zeros are kept as structural entries.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        for &(row, col, v) in triplets {
            if row >= nrows || col >= ncols {
                return Err(SparseError::OutOfBounds {
                    row,
                    col,
                    nrows,
                    ncols,
                });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite { row, col });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = sorted.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(SparseError::Duplicate {
                row: w[0].0,
                col: w[0].1,
            });
        }
        let rows = build_csr(nrows, sorted.iter().map(|&(r, c, v)| (r, c, v)));
        sorted.sort_by_key(|&(r, c, _)| (c, r));
        let cols = build_csr(ncols, sorted.iter().map(|&(r, c, v)| (c, r, v)));
        Ok(Self {
            nrows,
            ncols,
            rows,
            cols,
        })
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t).expect("identity triplets are valid")
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[]).expect("empty triplets are valid")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.values.len()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec: x has wrong length");
        assert_eq!(y.len(), self.nrows, "matvec: y has wrong length");
        self.rows.matvec(x, y);
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows, "matvec_transpose: x has wrong length");
        assert_eq!(y.len(), self.ncols, "matvec_transpose: y has wrong length");
        self.cols.matvec(x, y);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.matvec_transpose(x, &mut y);
        y
    }

    /// Entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.rows.row_ptr[i], self.rows.row_ptr[i + 1]);
        self.rows.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.rows.values[lo..hi].iter().copied())
    }

    /// Entries of column `j` as `(row, value)`.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.cols.row_ptr[j], self.cols.row_ptr[j + 1]);
        self.cols.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.cols.values[lo..hi].iter().copied())
    }

    /// Value at `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.rows.row_ptr[i], self.rows.row_ptr[i + 1]);
        match self.rows.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.rows.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Triplets in row-major `(row, col)` order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn transpose(&self) -> Self {
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            rows: self.cols.clone(),
            cols: self.rows.clone(),
        }
    }

    /// Same sparsity pattern with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.rows.values.iter_mut().for_each(|v| *v *= factor);
        out.cols.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.ncols)
            .map(|j| self.col(j).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.transpose().norm1()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }
}

fn build_csr(n: usize, sorted: impl Iterator<Item = (usize, usize, f64)>) -> Csr {
    let mut row_ptr = vec![0usize; n + 1];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for (r, c, v) in sorted {
        row_ptr[r + 1] += 1;
        col_idx.push(c);
        values.push(v);
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    Csr {
        row_ptr,
        col_idx,
        values,
    }
}

/// Wire form used by the model and shaping-task files: `{rows, cols, entries: [[r, c, v], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseTriplets {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl TryFrom<SparseTriplets> for SparseMatrix {
    type Error = SparseError;
    fn try_from(t: SparseTriplets) -> Result<Self, Self::Error> {
        SparseMatrix::from_triplets(t.rows, t.cols, &t.entries)
    }
}

impl From<&SparseMatrix> for SparseTriplets {
    fn from(m: &SparseMatrix) -> Self {
        SparseTriplets {
            rows: m.nrows,
            cols: m.ncols,
            entries: m.triplets().collect(),
        }
    }
}
