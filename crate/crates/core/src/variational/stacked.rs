use nalgebra::{DMatrix, DVector};

use super::regularizer::DiffOperator;
use crate::error::{invalid, DeblurError, Result};
use crate::operator::DenseOperator;

/// Dense matrix of `D` for an `m × n` image in column-stacked order.
fn diff_matrix(d: DiffOperator, m: usize, n: usize) -> DMatrix<f64> {
    let size = m * n;
    match d {
        DiffOperator::Identity => DMatrix::identity(size, size),
        DiffOperator::FirstDifference => {
            let mut out = DMatrix::zeros(2 * size, size);
            for j in 0..n {
                for i in 0..m {
                    let k = j * m + i;
                    if i + 1 < m {
                        out[(k, k + 1)] = 1.0;
                        out[(k, k)] = -1.0;
                    }
                    if j + 1 < n {
                        out[(size + k, k + m)] = 1.0;
                        out[(size + k, k)] = -1.0;
                    }
                }
            }
            out
        }
    }
}

/// Minimizer of `‖A x − b‖² + α² ‖D x‖²` via QR of the stacked matrix `[A; αD]`.
///
/// Never forms `AᵀA`. Fails with [`DeblurError::RankDeficient`] when `R` has a
/// negligible diagonal entry.
pub fn tikhonov_stacked_solve(
    a: &DenseOperator,
    b: &DVector<f64>,
    alpha: f64,
    d: DiffOperator,
) -> Result<DVector<f64>> {
    let size = a.matrix().nrows();
    if b.len() != size {
        return Err(invalid(format!("right-hand side has length {}, expected {size}", b.len())));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be finite and nonnegative, got {alpha}")));
    }
    let (m, n) = a.shape();
    let dm = diff_matrix(d, m, n);
    let rows = size + dm.nrows();
    let mut stacked = DMatrix::zeros(rows, size);
    stacked.view_mut((0, 0), (size, size)).copy_from(a.matrix());
    stacked.view_mut((size, 0), (dm.nrows(), size)).copy_from(&(dm * alpha));
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, size).copy_from(b);

    let qr = stacked.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || r.diagonal().iter().any(|v| v.abs() <= 1e-13 * scale) {
        return Err(DeblurError::RankDeficient);
    }
    let qtb = qr.q().tr_mul(&rhs);
    r.solve_upper_triangular(&qtb).ok_or(DeblurError::RankDeficient)
}
