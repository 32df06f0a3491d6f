//! Small linear-algebra helpers around `nalgebra` / `nalgebra-sparse`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};

/// Accumulates matrix entries; duplicates are summed on conversion.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    coo: CooMatrix<f64>,
}

impl SparseBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            coo: CooMatrix::new(n, n),
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.coo.push(i, j, v);
    }

    pub fn build(&self) -> CscMatrix<f64> {
        CscMatrix::from(&self.coo)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn to_dense(a: &CscMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from(a)
}

pub fn matvec(a: &CscMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for (j, col) in (0..a.ncols()).map(|j| (j, a.col(j))) {
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            y[i] += v * x[j];
        }
    }
    y
}

/// Largest `|a_ij - a_ji|` relative to the largest entry.
pub fn asymmetry(a: &CscMatrix<f64>) -> f64 {
    let t = a.transpose();
    let diff = a - &t;
    let scale = a.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let worst = diff.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// Direct solve of `a x = b`. Symmetric matrices go through a sparse
/// Cholesky factorization; anything else (or a failed factorization) falls
/// back to dense LU.
pub fn solve(a: &CscMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::SizeMismatch {
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    if asymmetry(a) < 1e-12 {
        if let Ok(chol) = CscCholesky::factor(a) {
            let rhs = DMatrix::from_column_slice(b.len(), 1, b);
            let x = chol.solve(&rhs);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x.as_slice().to_vec());
            }
        }
    }
    solve_dense(&to_dense(a), b)
}

pub fn solve_dense(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    a.clone()
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::LinearSolve("singular matrix".into()))
}
