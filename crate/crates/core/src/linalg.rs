//! Small dense linear-algebra helpers on top of `nalgebra`.

use crate::tensor::Matrix;

/// Relative singular-value cutoff used for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-12;

/// Moore-Penrose pseudo-inverse via SVD, dropping singular values below
/// `PINV_RTOL * sigma_max`.
pub fn pinv(m: &Matrix) -> Matrix {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, b| a.max(*b));
    if smax == 0.0 {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let eps = smax * PINV_RTOL * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(eps)
        .unwrap_or_else(|_| Matrix::zeros(m.ncols(), m.nrows()))
}

/// Ratio `sigma_min / sigma_max` over the `min(rows, cols)` singular values.
pub fn inverse_condition(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, b| a.max(*b));
    if smax == 0.0 {
        return 0.0;
    }
    let smin = sv.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    smin / smax
}

/// Solves `X * gram = rhs` for a symmetric positive semi-definite `gram`.
/// Falls back to the pseudo-inverse when the Cholesky factorization fails.
pub fn solve_right_spd(rhs: &Matrix, gram: &Matrix) -> Matrix {
    if let Some(chol) = gram.clone().cholesky() {
        // gram is symmetric, so X^T = gram^{-1} rhs^T.
        let xt = chol.solve(&rhs.transpose());
        if xt.iter().all(|v| v.is_finite()) {
            return xt.transpose();
        }
    }
    rhs * pinv(gram)
}
