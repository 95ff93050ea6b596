//! Compressed sparse row matrices and the direct sparse solve.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: matrix is {rows}x{rows}, vector has {len} entries")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
}

/// Square sparse matrix in CSR format with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds an `n x n` matrix, summing duplicate entries.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        assert!(sorted.iter().all(|&(i, j, _)| i < n && j < n), "triplet out of range");
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        let entries: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `a x = rhs` by sparse LU, with one step of iterative refinement when
/// the first residual exceeds `1e-12 |rhs|_inf`.
pub fn linear_solve(a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.n();
    if rhs.len() != n {
        return Err(LinalgError::DimensionMismatch { rows: n, len: rhs.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.values.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::LinearSolveFailure("non-finite system".into()));
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| LinalgError::LinearSolveFailure(format!("{e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| LinalgError::LinearSolveFailure(format!("{e:?}")))?;

    let solve = |b: &[f64]| -> Vec<f64> {
        let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
        let x = lu.solve(&rhs);
        (0..n).map(|i| x[(i, 0)]).collect()
    };
    let mut x = solve(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::LinearSolveFailure("singular factorization".into()));
    }
    let r: Vec<f64> = a.mul_vec(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
    if inf_norm(&r) > 1e-12 * inf_norm(rhs) {
        let dx = solve(&r);
        if dx.iter().all(|v| v.is_finite()) {
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
    }
    Ok(x)
}
