//! Kronecker-factored Hessian at global minima.
//!
//! At a global minimum the Hessian of the quadratic loss is `H = 2 Φ Φᵀ`,
//! where `Φ` stacks the per-layer blocks `Φ_k = A_k ⊗ G_k` with
//! `A_k = (∏_{j<k} W_j) Σx^{1/2}` and `G_k = (∏_{i>k} W_i)ᵀ`. `Φ` has only
//! `d_x·d_y` columns, so `H` is rank deficient for deep networks and all of
//! its nonzero spectrum lives in the reduced matrix `Ĥ = 2 ΦᵀΦ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::{DataMoments, LinearNetwork, TargetMap};

/// Refuse to materialize dense Hessians above this parameter count.
pub const DENSE_GUARD: usize = 10_000;
/// Power iteration stops when the eigen-residual drops below this.
pub const POWER_TOL: f64 = 1e-10;
/// Power iteration gives up after this many iterations.
pub const POWER_MAX_ITERS: usize = 50_000;

/// The factored form of the Hessian blocks at a global minimum.
#[derive(Debug, Clone)]
pub struct HessianFactor {
    /// `A_k = (∏_{j=1}^{k−1} W_j) · Σx^{1/2}`, shape `d_{k−1} × d_x`.
    pub left_factors: Vec<DMatrix<f64>>,
    /// `G_k = (∏_{i=k+1}^{m} W_i)ᵀ`, shape `d_k × d_y`.
    pub right_factors: Vec<DMatrix<f64>>,
    /// Row count of each block, `d_k · d_{k−1}`.
    pub block_dims: Vec<usize>,
    /// Total parameter count `N = Σ d_k d_{k−1}`.
    pub n_params: usize,
    /// Column count of `Φ`, `d_x · d_y`.
    pub col_dim: usize,
}

impl HessianFactor {
    pub fn depth(&self) -> usize {
        self.left_factors.len()
    }

    fn d_x(&self) -> usize {
        self.left_factors[0].ncols()
    }

    fn d_y(&self) -> usize {
        self.right_factors[0].ncols()
    }

    /// Dense `Φ_k = A_k ⊗ G_k` (row-indexed by `vec(W_k)`, column-major vec).
    pub fn phi_block(&self, k: usize) -> DMatrix<f64> {
        self.left_factors[k].kronecker(&self.right_factors[k])
    }

    /// Dense `Φ` stack, `N × d_x d_y`.
    pub fn phi(&self) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(self.n_params, self.col_dim);
        let mut row = 0;
        for k in 0..self.depth() {
            let block = self.phi_block(k);
            phi.view_mut((row, 0), (block.nrows(), block.ncols())).copy_from(&block);
            row += block.nrows();
        }
        phi
    }

    /// `Φ b` without forming `Φ`: block `k` is `vec(G_k B A_kᵀ)` for `b = vec(B)`.
    pub fn apply_phi(&self, b: &DVector<f64>) -> DVector<f64> {
        let bm = linalg::unvectorize(b, self.d_y(), self.d_x());
        let mut out = DVector::zeros(self.n_params);
        let mut row = 0;
        for k in 0..self.depth() {
            let block = &self.right_factors[k] * &bm * self.left_factors[k].transpose();
            out.rows_mut(row, block.len()).copy_from(&linalg::vectorize(&block));
            row += block.len();
        }
        out
    }

    /// `Φᵀ w` without forming `Φ`: `Σ_k vec(G_kᵀ Ŵ_k A_k)`.
    pub fn apply_phi_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut acc = DMatrix::zeros(self.d_y(), self.d_x());
        let mut row = 0;
        for k in 0..self.depth() {
            let (r, c) = (self.right_factors[k].nrows(), self.left_factors[k].nrows());
            let wk = linalg::unvectorize(&w.rows(row, r * c).into_owned(), r, c);
            acc += self.right_factors[k].transpose() * wk * &self.left_factors[k];
            row += r * c;
        }
        linalg::vectorize(&acc)
    }

    /// `H x = 2 Φ (Φᵀ x)`, matrix-free.
    pub fn apply_hessian(&self, x: &DVector<f64>) -> DVector<f64> {
        2.0 * self.apply_phi(&self.apply_phi_transpose(x))
    }

    /// `Ĥ b = 2 Σ_k vec(G_kᵀ G_k · B · A_kᵀ A_k)`, matrix-free.
    pub fn apply_reduced(&self, b: &DVector<f64>) -> DVector<f64> {
        let bm = linalg::unvectorize(b, self.d_y(), self.d_x());
        let mut acc = DMatrix::zeros(self.d_y(), self.d_x());
        for k in 0..self.depth() {
            let gb = self.right_factors[k].transpose() * (&self.right_factors[k] * &bm);
            acc += gb * self.left_factors[k].transpose() * &self.left_factors[k];
        }
        linalg::vectorize(&(2.0 * acc))
    }
}

/// Build the Hessian factors of `net` at a global minimum of the loss defined
/// by `moments`. The factorization is only valid on the minima manifold;
/// callers verify membership beforehand.
pub fn phi_blocks(net: &LinearNetwork, moments: &DataMoments) -> Result<HessianFactor> {
    if net.d_x() != moments.d_x() || net.d_y() != moments.d_y() {
        return Err(Error::DimensionMismatch("network and moments dimensions differ".into()));
    }
    let m = net.depth();
    // A_k needs the prefix product up to k−1; G_k the suffix from k+1.
    let mut left = Vec::with_capacity(m);
    let mut prefix = DMatrix::identity(net.d_x(), net.d_x());
    for k in 0..m {
        left.push(&prefix * &moments.sigma_x_sqrt);
        prefix = net.weights()[k].clone() * prefix;
    }
    let mut right = vec![DMatrix::zeros(0, 0); m];
    let mut suffix = DMatrix::identity(net.d_y(), net.d_y());
    for k in (0..m).rev() {
        right[k] = suffix.transpose();
        suffix = &suffix * &net.weights()[k];
    }
    let block_dims: Vec<usize> = (0..m).map(|k| left[k].nrows() * right[k].nrows()).collect();
    let n_params = net.n_params();
    debug_assert_eq!(block_dims.iter().sum::<usize>(), n_params);
    Ok(HessianFactor {
        left_factors: left,
        right_factors: right,
        block_dims,
        n_params,
        col_dim: net.d_x() * net.d_y(),
    })
}

/// Dense `N × N` Hessian `2 Φ Φᵀ`. Guarded: use the reduced or matrix-free
/// path for large networks.
pub fn full_hessian(factor: &HessianFactor) -> Result<DMatrix<f64>> {
    if factor.n_params > DENSE_GUARD {
        return Err(Error::SizeGuardExceeded { n: factor.n_params, limit: DENSE_GUARD });
    }
    let phi = factor.phi();
    Ok(2.0 * &phi * phi.transpose())
}

/// Reduced `(d_x d_y) × (d_x d_y)` matrix `Ĥ = 2 Σ_k (A_kᵀA_k) ⊗ (G_kᵀG_k)`,
/// whose nonzero spectrum equals that of the full Hessian.
pub fn reduced_hessian(factor: &HessianFactor) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(factor.col_dim, factor.col_dim);
    for k in 0..factor.depth() {
        let ata = factor.left_factors[k].transpose() * &factor.left_factors[k];
        let gtg = factor.right_factors[k].transpose() * &factor.right_factors[k];
        acc += ata.kronecker(&gtg);
    }
    2.0 * acc
}

/// How the top eigenpair is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigMethod {
    /// Dense eigendecomposition of the reduced matrix.
    DenseReduced,
    /// Matrix-free power iteration on the reduced operator.
    PowerIteration,
}

/// Top eigenpair of the Hessian together with the theoretical widest value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharpnessReport {
    /// Largest Hessian eigenvalue.
    pub lambda_max: f64,
    /// Unit top eigenvector of the full Hessian (length `N`).
    #[serde(with = "crate::io::serde_dvector")]
    pub eigvec: DVector<f64>,
    pub method: EigMethod,
    /// Power-iteration count; zero for the dense path.
    pub iterations: usize,
    /// `‖H b − λ b‖` for the reported pair.
    pub residual: f64,
    /// Theorem value `2m σ_max^{2(1−1/m)}` — the sharpness of the widest minima.
    pub widest_value: f64,
    /// `lambda_max / widest_value`; at least 1 (up to roundoff) on any global minimum.
    pub gap_ratio: f64,
    /// Set when the top singular value of the target is (numerically) repeated,
    /// making `u`, `v` a convention rather than canonical.
    pub non_unique_top: bool,
}

/// Sharpness of the widest minima for a target with top singular value
/// `sigma_max` and depth `m`: `2m σ_max^{2(1−1/m)}`.
pub fn widest_value(sigma_max: f64, m: usize) -> f64 {
    2.0 * m as f64 * sigma_max.powf(2.0 * (1.0 - 1.0 / m as f64))
}

/// Compute `λ_max(H)` and its eigenvector at a global minimum, either by dense
/// eigendecomposition of the reduced matrix or by matrix-free power iteration
/// started from `vec(u vᵀ)` plus a small deterministic perturbation.
pub fn lambda_max(factor: &HessianFactor, method: EigMethod, target: &TargetMap) -> Result<SharpnessReport> {
    let m = factor.depth();
    let widest = widest_value(target.sigma_max, m);
    let non_unique_top =
        target.singular_values.len() > 1 && target.top_gap <= 1e-12 * target.sigma_max.max(1.0);

    let (lambda, b_reduced, iterations) = match method {
        EigMethod::DenseReduced => {
            let (lam, vec) = linalg::symmetric_top_eigenpair(&reduced_hessian(factor));
            (lam, vec, 0)
        }
        EigMethod::PowerIteration => power_iterate(factor, target)?,
    };

    // Recover the eigenvector of H as Φ b (same nonzero eigenvalue).
    let mut eigvec = factor.apply_phi(&b_reduced);
    let norm = eigvec.norm();
    if norm > 0.0 {
        eigvec /= norm;
    }
    let residual = (factor.apply_hessian(&eigvec) - lambda * &eigvec).norm();

    let gap_ratio = if widest > 0.0 {
        lambda / widest
    } else if lambda.abs() <= 1e-12 {
        1.0
    } else {
        f64::INFINITY
    };

    Ok(SharpnessReport {
        lambda_max: lambda,
        eigvec,
        method,
        iterations,
        residual,
        widest_value: widest,
        gap_ratio,
        non_unique_top,
    })
}

fn power_iterate(factor: &HessianFactor, target: &TargetMap) -> Result<(f64, DVector<f64>, usize)> {
    // Start at vec(u vᵀ) — optimal at widest minima — plus a fixed-seed
    // perturbation so the iteration cannot start orthogonal to the top space.
    let b0 = linalg::vectorize(&(&target.u * target.v.transpose()));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f1a7);
    let mut b = DVector::from_fn(factor.col_dim, |i, _| b0[i] + 1e-3 * (rng.gen::<f64>() - 0.5));
    let norm = b.norm();
    if norm == 0.0 {
        b = DVector::from_element(factor.col_dim, (factor.col_dim as f64).sqrt().recip());
    } else {
        b /= norm;
    }

    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITERS {
        let hb = factor.apply_reduced(&b);
        lambda = b.dot(&hb);
        residual = (&hb - lambda * &b).norm();
        let norm = hb.norm();
        if norm == 0.0 {
            // Zero operator: eigenvalue 0, any unit vector works.
            return Ok((0.0, b, it));
        }
        b = hb / norm;
        if residual <= POWER_TOL {
            return Ok((lambda, b, it));
        }
    }
    Err(Error::PowerIterationDidNotConverge { iterations: POWER_MAX_ITERS, residual: residual.min(lambda) })
}

/// The certificate direction `Φ(v ⊗ u)`, normalized. At a widest minimum this
/// is the top eigenvector of `H`; elsewhere it still witnesses the lower bound
/// through its Rayleigh quotient.
pub fn theoretical_top_eigvec(factor: &HessianFactor, target: &TargetMap) -> Result<DVector<f64>> {
    // v ⊗ u = vec(u vᵀ) in column-major convention.
    let b = linalg::vectorize(&(&target.u * target.v.transpose()));
    let mut vec = factor.apply_phi(&b);
    let norm = vec.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    vec /= norm;
    Ok(vec)
}

/// The lower-bound functional
/// `ν(B) = 2m ‖(B Σx^{1/2} Tᵀ)^{m−1} B Σx^{1/2}‖₂^{2/m}`,
/// evaluated after normalizing `B` to unit Frobenius norm. Its maximum over
/// unit `B` (white data) is the widest-minima sharpness, attained at `B = u vᵀ`.
pub fn nu_bound(b_matrix: &DMatrix<f64>, target: &TargetMap, m: usize, moments: &DataMoments) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("depth m must be at least 1".into()));
    }
    if b_matrix.nrows() != target.d_y() || b_matrix.ncols() != target.d_x() {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{}, expected {}x{}",
            b_matrix.nrows(),
            b_matrix.ncols(),
            target.d_y(),
            target.d_x()
        )));
    }
    let norm = b_matrix.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let b = b_matrix / norm;
    let bs = &b * &moments.sigma_x_sqrt;
    let mut acc = bs.clone();
    let bst = &bs * target.t.transpose();
    for _ in 0..m - 1 {
        acc = &bst * acc;
    }
    Ok(2.0 * m as f64 * linalg::spectral_norm(&acc).powf(2.0 / m as f64))
}

/// Gradient descent with step size `eta` is linearly stable at the reported
/// minimum iff `λ_max ≤ 2/η` (closed inequality).
pub fn stability_check(report: &SharpnessReport, eta: f64) -> Result<bool> {
    if eta <= 0.0 {
        return Err(Error::InvalidArgument("eta must be positive".into()));
    }
    Ok(report.lambda_max <= 2.0 / eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{moments_from_target, LinearNetwork};
    use crate::widest::canonical_widest;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    #[test]
    fn single_layer_white_factors_are_identities() {
        let t = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let (moments, _) = moments_from_target(&t);
        let net = LinearNetwork::new(vec![t.clone()]).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        assert_eq!(factor.left_factors[0], DMatrix::identity(3, 3));
        assert_eq!(factor.right_factors[0], DMatrix::identity(2, 2));
        let h = full_hessian(&factor).unwrap();
        assert!((h - DMatrix::identity(6, 6) * 2.0).norm() <= 1e-12);
    }

    #[test]
    fn canonical_two_layer_factors_are_diagonal_roots() {
        let t = diag2(4.0, 1.0);
        let (moments, target) = moments_from_target(&t);
        let net = canonical_widest(&target, &[2, 2, 2]).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        assert!((factor.left_factors[1].clone() - diag2(2.0, 1.0)).norm() <= 1e-12);
        assert!((factor.right_factors[0].clone() - diag2(2.0, 1.0)).norm() <= 1e-12);
    }

    #[test]
    fn scalar_two_layer_dense_hessian_matches_closed_form() {
        // w = (1, 2), tau = 2: H = [[8, 4], [4, 2]].
        let (moments, _) = moments_from_target(&DMatrix::from_element(1, 1, 2.0));
        let net = LinearNetwork::new(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
        ])
        .unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let h = full_hessian(&factor).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[8.0, 4.0, 4.0, 2.0]);
        assert!((h - expected).norm() <= 1e-12);
    }

    #[test]
    fn phi_matches_bruteforce_kronecker_expansion() {
        // Entry-by-entry Kronecker oracle, independent of nalgebra's kronecker.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = linalg::standard_normal_matrix(&mut rng, 3, 3);
        let (moments, target) = moments_from_target(&t);
        let net = crate::sampler::sample_arbitrary_minimum(&target, &[3, 3, 3, 3], 5).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();

        let mut row_offset = 0;
        for k in 0..factor.depth() {
            let a = &factor.left_factors[k];
            let g = &factor.right_factors[k];
            let phi = factor.phi();
            for ar in 0..a.nrows() {
                for ac in 0..a.ncols() {
                    for gr in 0..g.nrows() {
                        for gc in 0..g.ncols() {
                            let want = a[(ar, ac)] * g[(gr, gc)];
                            let got = phi[(row_offset + ar * g.nrows() + gr, ac * g.ncols() + gc)];
                            assert!((want - got).abs() <= 1e-12, "kron mismatch at block {k}");
                        }
                    }
                }
            }
            row_offset += a.nrows() * g.nrows();
        }
    }

    #[test]
    fn reduced_spectrum_matches_full_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let t = linalg::standard_normal_matrix(&mut rng, 2, 2);
        let (moments, target) = moments_from_target(&t);
        let net = crate::sampler::sample_arbitrary_minimum(&target, &[2, 2, 2], 9).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let full = full_hessian(&factor).unwrap();
        assert_eq!(full.nrows(), 8);
        let reduced = reduced_hessian(&factor);
        assert_eq!(reduced.nrows(), 4);
        let full_eigs = linalg::symmetric_eigenvalues_desc(&full);
        let reduced_eigs = linalg::symmetric_eigenvalues_desc(&reduced);
        for i in 0..4 {
            let denom = reduced_eigs[i].abs().max(1.0);
            assert!((full_eigs[i] - reduced_eigs[i]).abs() <= 1e-9 * denom);
        }
        // Everything past the reduced dimension is numerically zero.
        for &e in &full_eigs[4..] {
            assert!(e.abs() <= 1e-9 * full_eigs[0].max(1.0));
        }
    }

    #[test]
    fn canonical_top_eigenvalue_is_widest_value() {
        let t = diag2(4.0, 1.0);
        let (moments, target) = moments_from_target(&t);
        let net = canonical_widest(&target, &[2, 2, 2]).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let report = lambda_max(&factor, EigMethod::DenseReduced, &target).unwrap();
        assert!((report.lambda_max - 16.0).abs() <= 1e-9);
        assert!((report.gap_ratio - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn scalar_lambda_matches_sum_of_inverse_squares() {
        // w = (1, 2), tau = 2: lambda = 2 * 4 * (1 + 1/4) = 10.
        let (moments, target) = moments_from_target(&DMatrix::from_element(1, 1, 2.0));
        let net = LinearNetwork::new(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
        ])
        .unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let report = lambda_max(&factor, EigMethod::DenseReduced, &target).unwrap();
        assert!((report.lambda_max - 10.0).abs() <= 1e-10);
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for seed in 0..10u64 {
            let t = linalg::standard_normal_matrix(&mut rng, 3, 3);
            let (moments, target) = moments_from_target(&t);
            let net = crate::sampler::sample_arbitrary_minimum(&target, &[3, 3, 3, 3], seed).unwrap();
            let factor = phi_blocks(&net, &moments).unwrap();
            let dense = lambda_max(&factor, EigMethod::DenseReduced, &target).unwrap();
            let power = lambda_max(&factor, EigMethod::PowerIteration, &target).unwrap();
            assert!(power.residual <= POWER_TOL * 10.0);
            assert!(
                (dense.lambda_max - power.lambda_max).abs() <= 1e-8 * dense.lambda_max,
                "dense {} vs power {}",
                dense.lambda_max,
                power.lambda_max
            );
        }
    }

    #[test]
    fn theoretical_eigvec_is_eigenvector_at_widest() {
        let t = diag2(4.0, 1.0);
        let (moments, target) = moments_from_target(&t);
        let net = canonical_widest(&target, &[2, 2, 2]).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let b = theoretical_top_eigvec(&factor, &target).unwrap();
        let hb = factor.apply_hessian(&b);
        assert!((hb - 16.0 * &b).norm() <= 1e-9);
    }

    #[test]
    fn theoretical_eigvec_for_single_layer_is_v_kron_u() {
        let t = diag2(3.0, 1.0);
        let (moments, target) = moments_from_target(&t);
        let net = LinearNetwork::new(vec![t.clone()]).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let b = theoretical_top_eigvec(&factor, &target).unwrap();
        let expected = linalg::vectorize(&(&target.u * target.v.transpose()));
        assert!((b - expected).norm() <= 1e-12);
    }

    #[test]
    fn rayleigh_of_certificate_reaches_widest_value_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let t = linalg::standard_normal_matrix(&mut rng, 4, 4);
        let (moments, target) = moments_from_target(&t);
        for seed in 0..5u64 {
            let net = crate::sampler::sample_arbitrary_minimum(&target, &[4, 4, 4, 4], seed).unwrap();
            let factor = phi_blocks(&net, &moments).unwrap();
            let b = theoretical_top_eigvec(&factor, &target).unwrap();
            let rayleigh = b.dot(&factor.apply_hessian(&b));
            let widest = widest_value(target.sigma_max, 3);
            assert!(rayleigh >= widest - 1e-8, "rayleigh {rayleigh} below widest {widest}");
        }
    }

    #[test]
    fn nu_bound_values_on_singular_directions() {
        let t = diag2(4.0, 1.0);
        let (moments, target) = moments_from_target(&t);
        let top = &target.u * target.v.transpose();
        let nu = nu_bound(&top, &target, 2, &moments).unwrap();
        assert!((nu - 16.0).abs() <= 1e-10);
        // Second triplet gives the strictly smaller value 2m * sigma_2^{2(1-1/m)}.
        let u2 = target.left_vectors.column(1).into_owned();
        let v2 = target.right_vectors.column(1).into_owned();
        let nu2 = nu_bound(&(&u2 * v2.transpose()), &target, 2, &moments).unwrap();
        assert!((nu2 - 4.0).abs() <= 1e-10);
        assert!(nu2 < nu);
    }

    #[test]
    fn nu_bound_never_exceeds_widest_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let t = linalg::standard_normal_matrix(&mut rng, 3, 2);
        let (moments, target) = moments_from_target(&t);
        for m in [1usize, 2, 4] {
            let widest = widest_value(target.sigma_max, m);
            for _ in 0..200 {
                let b = linalg::standard_normal_matrix(&mut rng, 3, 2);
                let nu = nu_bound(&b, &target, m, &moments).unwrap();
                assert!(nu <= widest + 1e-9, "nu {nu} above widest {widest} at m={m}");
            }
        }
    }

    #[test]
    fn stability_threshold_is_closed() {
        let t = diag2(2.0, 1.0);
        let (moments, target) = moments_from_target(&t);
        let net = canonical_widest(&target, &[2, 2, 2]).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let mut report = lambda_max(&factor, EigMethod::DenseReduced, &target).unwrap();
        report.lambda_max = 8.0;
        assert!(stability_check(&report, 0.25).unwrap());
        assert!(!stability_check(&report, 0.3).unwrap());
        assert!(stability_check(&report, -1.0).is_err());
    }

    #[test]
    fn dense_guard_rejects_large_networks() {
        let factor = HessianFactor {
            left_factors: vec![DMatrix::identity(101, 101)],
            right_factors: vec![DMatrix::identity(101, 101)],
            block_dims: vec![101 * 101],
            n_params: 101 * 101,
            col_dim: 101 * 101,
        };
        assert!(matches!(full_hessian(&factor), Err(Error::SizeGuardExceeded { .. })));
    }

    #[test]
    fn full_hessian_matches_finite_differences_at_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let t = linalg::standard_normal_matrix(&mut rng, 2, 2);
        let (moments, target) = moments_from_target(&t);
        let net = crate::sampler::sample_arbitrary_minimum(&target, &[2, 2, 2, 2], 3).unwrap();
        let factor = phi_blocks(&net, &moments).unwrap();
        let h = full_hessian(&factor).unwrap();
        let h_fd = crate::testutil::finite_difference_hessian(&net, &moments);
        let scale = 1.0 + h.amax();
        assert!((h - h_fd).amax() <= 1e-4 * scale);
    }
}
