//! Small dense linear-algebra helpers used across the crate.
//!
//! Vectorization is column-major throughout (`vec(M1 M2 M3) = (M3^T ⊗ M1) vec(M2)`),
//! which matches nalgebra's internal storage.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Frobenius norm of a matrix.
pub fn fro_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Singular values sorted in nonincreasing order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Condition number sigma_max / sigma_min; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values_desc(m);
    let (max, min) = (s[0], *s.last().unwrap());
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric PSD square root via eigendecomposition; tiny negative
/// eigenvalues from roundoff are clamped to zero.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Eigenvalues of a symmetric matrix, nonincreasing.
pub fn symmetric_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Top eigenpair of a symmetric PSD matrix (dense eigendecomposition).
pub fn symmetric_top_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut idx = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[idx] {
            idx = i;
        }
    }
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}

/// Rectangular diagonal matrix: entry `(k, k) = values.get(k).unwrap_or(0)`.
pub fn rectangular_diagonal(rows: usize, cols: usize, values: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for k in 0..rows.min(cols) {
        m[(k, k)] = values.get(k).copied().unwrap_or(0.0);
    }
    m
}

/// Column-major vectorization.
pub fn vectorize(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Matrix with i.i.d. standard-normal entries.
pub fn standard_normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-ish random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = standard_normal_matrix(rng, n, n);
    g.qr().q()
}

/// Solve `X A = B` for `X` with symmetric positive definite `A` (i.e. `X = B A^{-1}`).
pub fn right_divide_spd(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("Cholesky factorization failed".into()))?;
    // X = B A^{-1}  <=>  X^T = A^{-1} B^T for symmetric A.
    Ok(chol.solve(&b.transpose()).transpose())
}

/// General inverse; error if singular.
pub fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("matrix is numerically singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_of_spd_matrix_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = standard_normal_matrix(&mut rng, 4, 4);
        let spd = &g * g.transpose() + DMatrix::identity(4, 4);
        let s = symmetric_sqrt(&spd);
        assert!((&s * &s - &spd).norm() <= 1e-10 * spd.norm());
    }

    #[test]
    fn rectangular_diagonal_pads_with_zero() {
        let d = rectangular_diagonal(3, 2, &[2.0]);
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(1, 1)], 0.0);
        assert_eq!(d[(2, 1)], 0.0);
    }

    #[test]
    fn vectorize_round_trip_is_column_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let v = vectorize(&m);
        assert_eq!(v.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvectorize(&v, 2, 2), m);
    }

    #[test]
    fn random_orthogonal_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_orthogonal(&mut rng, 5);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(5, 5)).norm() <= 1e-12);
    }

    #[test]
    fn right_divide_matches_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = standard_normal_matrix(&mut rng, 3, 3);
        let a = &g * g.transpose() + DMatrix::identity(3, 3);
        let b = standard_normal_matrix(&mut rng, 2, 3);
        let x = right_divide_spd(&b, &a).unwrap();
        assert!((&x * &a - &b).norm() <= 1e-10);
    }
}
