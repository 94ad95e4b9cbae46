//! Dense linear algebra, row norms, seeded sampling and the Adam optimizer.

mod adam;
mod distributions;
mod matrix;
mod norms;
mod rng;

pub use adam::{adam_step, AdamState};
pub use distributions::{
    check_simplex, log_prob_categorical, log_prob_gaussian, sample_categorical, sample_gaussian,
    SIMPLEX_TOL,
};
pub use matrix::{dot, Matrix};
pub use norms::{
    l21_norm, l21_subgradient, matrix_zero_norm, matrix_zero_norm_tol, matrix_zero_norm_tol_by,
    row_norms, RowNorm, ZERO_ROW_GUARD,
};
pub use rng::{derive_seed, Rng};
