//! Small linear-algebra helpers shared across the filtering and fusion code.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Symmetry/PSD tolerance scaled to the matrix magnitude: `1e-9 * (1 + mean |diag|)`.
///
/// Absolute tolerances break down across unit scales, so every PSD check in
/// the crate goes through this.
pub fn sym_tolerance(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1) as f64;
    let trace_abs: f64 = m.diagonal().iter().map(|x| x.abs()).sum();
    1e-9 * (1.0 + trace_abs / n)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    symmetrize_in_place(&mut s);
    s
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = symmetrize(m).symmetric_eigenvalues();
    eig.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Positive semidefinite within `tol` (eigenvalues of the symmetric part >= -tol).
pub fn is_psd_within(m: &DMatrix<f64>, tol: f64) -> bool {
    min_symmetric_eigenvalue(m) >= -tol
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Cholesky factorization that also rejects non-finite factors.
///
/// nalgebra's `Cholesky::new` fails on indefinite input; the extra finiteness
/// check guards against NaN/inf sneaking through intermediate arithmetic.
pub fn spd_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Cholesky::new(m.clone())
}

/// `log det(M)` from an existing Cholesky factor.
pub fn log_determinant(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// Symmetric PSD square root via eigendecomposition; tiny negative
/// eigenvalues (numerical noise) are clamped to zero.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for (k, ev) in eig.eigenvalues.iter().enumerate() {
        let root = ev.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, k)] *= root;
        }
    }
    &scaled * eig.eigenvectors.transpose()
}

/// Exact discretization of the linear SDE `dx = F x dt + noise` over a step `dt`:
/// returns the transition matrix `Ad = exp(F dt)` and the integrated process
/// noise covariance `Qd = ∫ exp(F s) C exp(Fᵀ s) ds` (Van Loan's method),
/// where `C` is the continuous diffusion matrix.
pub fn van_loan_discretize(
    drift: &DMatrix<f64>,
    diffusion: &DMatrix<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = drift.nrows();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-drift * dt));
    block.view_mut((0, n), (n, n)).copy_from(&(diffusion * dt));
    block
        .view_mut((n, n), (n, n))
        .copy_from(&(drift.transpose() * dt));
    let e = block.exp();
    let phi12 = e.view((0, n), (n, n)).into_owned();
    let phi22 = e.view((n, n), (n, n)).into_owned();
    let ad = phi22.transpose();
    let qd = symmetrize(&(&ad * phi12));
    (ad, qd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn tolerance_scales_with_trace() {
        let small = DMatrix::identity(2, 2);
        let big = DMatrix::identity(2, 2) * 1e6;
        assert!(sym_tolerance(&big) > sym_tolerance(&small) * 1e5);
    }

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let m = dmatrix![1.0, 2.0; 4.0, 3.0];
        let s = symmetrize(&m);
        assert_eq!(s[(0, 1)], 3.0);
        assert_eq!(s[(1, 0)], 3.0);
        assert_eq!(max_asymmetry(&s), 0.0);
    }

    #[test]
    fn psd_check_flags_negative_eigenvalue() {
        let m = dmatrix![1.0, 0.0; 0.0, -0.5];
        assert!(!is_psd_within(&m, sym_tolerance(&m)));
        assert!(is_psd_within(&DMatrix::identity(3, 3), 0.0));
    }

    #[test]
    fn cholesky_rejects_indefinite_and_nan() {
        assert!(spd_cholesky(&dmatrix![1.0, 0.0; 0.0, -1.0]).is_none());
        assert!(spd_cholesky(&dmatrix![f64::NAN]).is_none());
        assert!(spd_cholesky(&dmatrix![4.0]).is_some());
    }

    #[test]
    fn log_determinant_matches_scalar() {
        let chol = spd_cholesky(&dmatrix![4.0]).unwrap();
        assert_relative_eq!(log_determinant(&chol), 4.0f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = dmatrix![4.0, 1.0; 1.0, 3.0];
        let s = matrix_sqrt_psd(&m);
        assert_relative_eq!((&s * &s.transpose()), m, epsilon = 1e-12);
    }

    // Scalar oracle: for dx = -x dt + dW with diffusion c, the exact step is
    // Ad = e^{-dt}, Qd = c (1 - e^{-2 dt}) / 2.
    #[test]
    fn van_loan_matches_scalar_closed_form() {
        let f = dmatrix![-1.0];
        let c = dmatrix![1.0];
        let dt = 0.3;
        let (ad, qd) = van_loan_discretize(&f, &c, dt);
        assert_relative_eq!(ad[(0, 0)], (-dt).exp(), epsilon = 1e-12);
        assert_relative_eq!(qd[(0, 0)], 0.5 * (1.0 - (-2.0 * dt).exp()), epsilon = 1e-12);
    }

    // Rotation oracle: exp of a skew matrix is a rotation; with zero
    // diffusion the transition must be exactly the rotation block.
    #[test]
    fn van_loan_transition_matches_rotation() {
        let w = 2.0;
        let f = dmatrix![0.0, w; -w, 0.0];
        let dt = 0.25;
        let (ad, qd) = van_loan_discretize(&f, &DMatrix::zeros(2, 2), dt);
        let angle = w * dt;
        let expected = dmatrix![angle.cos(), angle.sin(); -angle.sin(), angle.cos()];
        assert_relative_eq!(ad, expected, epsilon = 1e-12);
        assert!(qd.norm() < 1e-14);
    }
}
