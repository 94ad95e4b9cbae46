//! Row-structured matrix norms.
//!
//! The matrix zero norm counts rows with any nonzero entry; the ℓ2,1 norm
//! (sum of row Euclidean norms) is its convex surrogate and drives whole
//! rows to zero when used as a penalty.

use super::Matrix;

/// Rows with Euclidean norm at or below this value get a zero subgradient.
pub const ZERO_ROW_GUARD: f64 = 1e-12;

/// Norm used to measure a single row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowNorm {
    L1,
    L2,
}

impl RowNorm {
    pub fn of(self, row: &[f64]) -> f64 {
        match self {
            RowNorm::L1 => row.iter().map(|v| v.abs()).sum(),
            RowNorm::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

/// Number of rows containing at least one nonzero entry.
pub fn matrix_zero_norm(a: &Matrix) -> usize {
    a.row_iter()
        .filter(|r| r.iter().any(|v| v.abs() > 0.0))
        .count()
}

/// Number of rows whose Euclidean norm exceeds `tau`.
pub fn matrix_zero_norm_tol(a: &Matrix, tau: f64) -> usize {
    matrix_zero_norm_tol_by(a, tau, RowNorm::L2)
}

/// Number of rows whose `norm` exceeds `tau`.
pub fn matrix_zero_norm_tol_by(a: &Matrix, tau: f64, norm: RowNorm) -> usize {
    a.row_iter().filter(|r| norm.of(r) > tau).count()
}

pub fn row_norms(a: &Matrix) -> Vec<f64> {
    a.row_iter().map(|r| RowNorm::L2.of(r)).collect()
}

/// `Σ_i ‖a^i‖₂` over the rows of `a`.
pub fn l21_norm(a: &Matrix) -> f64 {
    a.row_iter().map(|r| RowNorm::L2.of(r)).sum()
}

/// Subgradient of [`l21_norm`]: each row normalized to unit length, rows
/// with norm ≤ [`ZERO_ROW_GUARD`] mapped to zero.
pub fn l21_subgradient(a: &Matrix) -> Matrix {
    let mut g = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let r = a.row(i);
        let n = RowNorm::L2.of(r);
        if n > ZERO_ROW_GUARD {
            for (gi, &ai) in g.row_mut(i).iter_mut().zip(r) {
                *gi = ai / n;
            }
        }
    }
    g
}
