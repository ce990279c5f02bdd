//! Closed-form analysis of scalar networks (`f_w(x) = ∏ w_j x`): the rank-one
//! Hessian at global minima, the discrete widest set, and the deceptive
//! behavior of loss plots along lines connecting two minima.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{DataMoments, LinearNetwork};

/// Relative tolerance for membership in the scalar minima set `∏ w_j = τ`.
pub const OMEGA_TOL: f64 = 1e-12;

/// An `m`-layer scalar network together with the scalar moments that define
/// its loss: `τ = σ̂xy / σ̂x²` and `σ̂x²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarNetwork {
    /// Layer scalars `w_1 … w_m`.
    pub w: Vec<f64>,
    /// Optimal end-to-end coefficient.
    pub tau: f64,
    /// Empirical second moment of the scalar input.
    pub sigma_x2: f64,
}

impl ScalarNetwork {
    pub fn new(w: Vec<f64>, tau: f64, sigma_x2: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("scalar network needs at least one layer".into()));
        }
        if sigma_x2 <= 0.0 {
            return Err(Error::InvalidArgument("sigma_x2 must be positive".into()));
        }
        Ok(Self { w, tau, sigma_x2 })
    }

    pub fn depth(&self) -> usize {
        self.w.len()
    }

    pub fn product(&self) -> f64 {
        self.w.iter().product()
    }

    /// Membership in the minima set: `∏ w_j = τ` at relative tolerance [`OMEGA_TOL`].
    pub fn in_omega(&self) -> bool {
        (self.product() - self.tau).abs() <= OMEGA_TOL * self.tau.abs().max(1.0)
    }

    /// Embed as a network of 1×1 matrices with matching scalar moments, for
    /// cross-checking against the vector-valued machinery.
    pub fn embed(&self) -> (LinearNetwork, DataMoments) {
        let weights = self.w.iter().map(|&w| DMatrix::from_element(1, 1, w)).collect();
        let net = LinearNetwork::new(weights).expect("1x1 chain is always valid");
        let sigma_x = DMatrix::from_element(1, 1, self.sigma_x2);
        let sigma_xy = self.tau * self.sigma_x2;
        let moments = DataMoments::new(
            sigma_x,
            DMatrix::from_element(1, 1, sigma_xy),
            // Consistent noiseless output moment: y = tau * x.
            DMatrix::from_element(1, 1, self.tau * sigma_xy),
        )
        .expect("scalar moments are valid");
        (net, moments)
    }
}

fn require_omega(net: &ScalarNetwork) -> Result<()> {
    if !net.in_omega() {
        return Err(Error::NotGlobalMinimum {
            residual: (net.product() - net.tau).abs(),
            tol: OMEGA_TOL * net.tau.abs().max(1.0),
        });
    }
    Ok(())
}

/// The single nonzero Hessian eigenvalue at a scalar global minimum:
/// `2 σ̂x² τ² Σ_j w_j⁻²`. The Hessian itself is `2 σ̂x² τ² z zᵀ` with
/// `z = (w_1⁻¹, …, w_m⁻¹)`; see [`scalar_hessian`].
pub fn scalar_lambda_max(net: &ScalarNetwork) -> Result<f64> {
    require_omega(net)?;
    if let Some(layer) = net.w.iter().position(|&w| w == 0.0) {
        return Err(Error::SingularWeight { layer: layer + 1 });
    }
    let sum: f64 = net.w.iter().map(|&w| w.powi(-2)).sum();
    Ok(2.0 * net.sigma_x2 * net.tau * net.tau * sum)
}

/// The full rank-one Hessian `2 σ̂x² τ² z zᵀ` at a scalar global minimum.
pub fn scalar_hessian(net: &ScalarNetwork) -> Result<DMatrix<f64>> {
    require_omega(net)?;
    if let Some(layer) = net.w.iter().position(|&w| w == 0.0) {
        return Err(Error::SingularWeight { layer: layer + 1 });
    }
    let z = DVector::from_iterator(net.depth(), net.w.iter().map(|&w| 1.0 / w));
    Ok(2.0 * net.sigma_x2 * net.tau * net.tau * &z * z.transpose())
}

/// The widest set of scalar minima in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarWidest {
    /// Common magnitude `|τ|^{1/m}` of every layer at a widest minimum.
    pub magnitude: f64,
    /// Sharpness of the widest minima, `2m σ̂x² τ^{2(1−1/m)}`.
    pub sharpness: f64,
    /// Number of widest minima, `2^{m−1}` (sign patterns with `∏ sgn(w_j) = sgn(τ)`).
    pub count: u64,
    /// True when `τ = 0`: the minima set degenerates to coordinate hyperplanes
    /// and magnitude/count lose their meaning.
    pub degenerate: bool,
}

impl ScalarWidest {
    /// Enumerate the sign patterns of the widest set (empty when degenerate).
    pub fn sign_patterns(&self, tau: f64, m: usize) -> Vec<Vec<i8>> {
        if self.degenerate {
            return Vec::new();
        }
        let want = if tau > 0.0 { 1i32 } else { -1 };
        let mut out = Vec::new();
        for bits in 0u64..(1 << m) {
            let pattern: Vec<i8> = (0..m).map(|j| if bits >> j & 1 == 1 { -1 } else { 1 }).collect();
            let prod: i32 = pattern.iter().map(|&s| s as i32).product();
            if prod == want {
                out.push(pattern);
            }
        }
        out
    }
}

/// Magnitude, sharpness, and cardinality of the widest scalar minima.
pub fn scalar_widest(tau: f64, m: usize, sigma_x2: f64) -> Result<ScalarWidest> {
    if m == 0 {
        return Err(Error::InvalidArgument("depth m must be at least 1".into()));
    }
    if sigma_x2 <= 0.0 {
        return Err(Error::InvalidArgument("sigma_x2 must be positive".into()));
    }
    if tau == 0.0 {
        return Ok(ScalarWidest { magnitude: 0.0, sharpness: 0.0, count: 0, degenerate: true });
    }
    Ok(ScalarWidest {
        magnitude: tau.abs().powf(1.0 / m as f64),
        sharpness: 2.0 * m as f64 * sigma_x2 * (tau * tau).powf(1.0 - 1.0 / m as f64),
        count: 1 << (m - 1),
        degenerate: false,
    })
}

/// How the loss looks along the line connecting two minima.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpVerdict {
    /// The 1-D section curves more steeply around the first argument.
    W1AppearsSharper,
    W2AppearsSharper,
    Equal,
}

/// Compare the apparent widths of two positive-orthant minima of the same
/// `τ > 0` along their connecting line. The first appears sharper iff
/// `Σ w_i⁽²⁾/w_i⁽¹⁾ > Σ w_i⁽¹⁾/w_i⁽²⁾`; returns the verdict and both sums.
pub fn interp_compare(w1: &ScalarNetwork, w2: &ScalarNetwork) -> Result<(InterpVerdict, f64, f64)> {
    if w1.depth() != w2.depth() {
        return Err(Error::DimensionMismatch("networks must have equal depth".into()));
    }
    if (w1.tau - w2.tau).abs() > 1e-12 * w1.tau.abs().max(1.0) {
        return Err(Error::InvalidArgument("networks must share the same tau".into()));
    }
    if w1.tau <= 0.0 {
        return Err(Error::UnsupportedOrthant("comparison requires tau > 0".into()));
    }
    if w1.w.iter().chain(w2.w.iter()).any(|&w| w <= 0.0) {
        return Err(Error::UnsupportedOrthant("all weights must be positive".into()));
    }
    require_omega(w1)?;
    require_omega(w2)?;
    let forward: f64 = w1.w.iter().zip(&w2.w).map(|(a, b)| b / a).sum();
    let backward: f64 = w1.w.iter().zip(&w2.w).map(|(a, b)| a / b).sum();
    let verdict = if (forward - backward).abs() <= 1e-12 {
        InterpVerdict::Equal
    } else if forward > backward {
        InterpVerdict::W1AppearsSharper
    } else {
        InterpVerdict::W2AppearsSharper
    };
    Ok((verdict, forward, backward))
}

/// Given the positive widest minimum `w1` and a minimum `w2` that appears
/// sharper than it, construct `w3` with `w_i⁽³⁾ = (w_i⁽¹⁾)²/w_i⁽²⁾`, a minimum
/// that the interpolation plot shows as wider than the true widest.
pub fn deceive_construct(w1: &ScalarNetwork, w2: &ScalarNetwork) -> Result<ScalarNetwork> {
    let (verdict, _, _) = interp_compare(w1, w2)?;
    let widest = scalar_widest(w1.tau, w1.depth(), w1.sigma_x2)?;
    if w1.w.iter().any(|&w| (w - widest.magnitude).abs() > 1e-9 * widest.magnitude) {
        return Err(Error::InvalidArgument("w1 must be the positive-orthant widest minimum".into()));
    }
    if verdict == InterpVerdict::W1AppearsSharper {
        return Err(Error::InvalidArgument(
            "w2 must appear sharper than w1 (it already appears wider)".into(),
        ));
    }
    let w3: Vec<f64> = w1.w.iter().zip(&w2.w).map(|(a, b)| a * a / b).collect();
    ScalarNetwork::new(w3, w1.tau, w1.sigma_x2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessian::{lambda_max, phi_blocks, EigMethod};
    use crate::moments::TargetMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net(w: &[f64], tau: f64) -> ScalarNetwork {
        ScalarNetwork::new(w.to_vec(), tau, 1.0).unwrap()
    }

    #[test]
    fn lambda_closed_forms() {
        assert!((scalar_lambda_max(&net(&[2.0], 2.0)).unwrap() - 2.0).abs() <= 1e-12);
        assert!((scalar_lambda_max(&net(&[1.0, 2.0], 2.0)).unwrap() - 10.0).abs() <= 1e-12);
        let s = 2.0_f64.sqrt();
        assert!((scalar_lambda_max(&net(&[s, s], 2.0)).unwrap() - 8.0).abs() <= 1e-12);
    }

    #[test]
    fn lambda_requires_omega_membership() {
        let off = net(&[1.0, 1.0], 2.0);
        assert!(matches!(scalar_lambda_max(&off), Err(Error::NotGlobalMinimum { .. })));
    }

    #[test]
    fn lambda_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..100 {
            let m = 1 + rng.gen_range(0..4usize);
            let tau: f64 = rng.gen_range(0.5..3.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.3..2.0)).collect();
            let partial: f64 = w.iter().take(m - 1).product();
            w[m - 1] = tau / partial;
            let scalar = ScalarNetwork::new(w, tau, 1.0).unwrap();
            let lam = scalar_lambda_max(&scalar).unwrap();
            let (embedded, moments) = scalar.embed();
            let h_fd = crate::testutil::finite_difference_hessian(&embedded, &moments);
            let top = crate::linalg::symmetric_eigenvalues_desc(&h_fd)[0];
            assert!((lam - top).abs() <= 1e-6 * lam.max(1.0), "{lam} vs fd {top}");
        }
    }

    #[test]
    fn hessian_is_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..50 {
            let m = 2 + rng.gen_range(0..4usize);
            let tau = rng.gen_range(0.5..4.0);
            let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..3.0)).collect();
            let partial: f64 = w.iter().take(m - 1).product();
            w[m - 1] = tau / partial;
            let scalar = ScalarNetwork::new(w, tau, 1.0).unwrap();
            let h = scalar_hessian(&scalar).unwrap();
            let eigs = crate::linalg::symmetric_eigenvalues_desc(&h);
            assert!(eigs[1].abs() <= 1e-10 * eigs[0]);
            assert!((eigs[0] - scalar_lambda_max(&scalar).unwrap()).abs() <= 1e-10 * eigs[0]);
        }
    }

    #[test]
    fn widest_set_closed_form() {
        let w = scalar_widest(2.0, 2, 1.0).unwrap();
        assert!((w.magnitude - 2.0_f64.sqrt()).abs() <= 1e-12);
        assert!((w.sharpness - 8.0).abs() <= 1e-12);
        assert_eq!(w.count, 2);

        let w = scalar_widest(-8.0, 3, 1.0).unwrap();
        assert!((w.magnitude - 2.0).abs() <= 1e-12);
        assert_eq!(w.count, 4);
        let patterns = w.sign_patterns(-8.0, 3);
        assert_eq!(patterns.len(), 4);
        for p in &patterns {
            assert_eq!(p.iter().map(|&s| s as i32).product::<i32>(), -1);
        }

        let w = scalar_widest(5.0, 1, 1.0).unwrap();
        assert!((w.magnitude - 5.0).abs() <= 1e-12);
        assert!((w.sharpness - 2.0).abs() <= 1e-12);
        assert_eq!(w.count, 1);
    }

    #[test]
    fn widest_cardinality_matches_exhaustive_enumeration() {
        for m in 1..=6usize {
            let widest = scalar_widest(1.5, m, 1.0).unwrap();
            assert_eq!(widest.sign_patterns(1.5, m).len() as u64, widest.count);
            assert_eq!(widest.count, 1 << (m - 1));
            let neg = scalar_widest(-1.5, m, 1.0).unwrap();
            assert_eq!(neg.sign_patterns(-1.5, m).len() as u64, neg.count);
        }
    }

    #[test]
    fn zero_tau_is_degenerate() {
        let w = scalar_widest(0.0, 3, 1.0).unwrap();
        assert!(w.degenerate);
        assert_eq!(w.sharpness, 0.0);
        assert!(w.sign_patterns(0.0, 3).is_empty());
    }

    #[test]
    fn am_gm_floor_holds_with_equality_iff_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..1000 {
            let m = 2 + rng.gen_range(0..4usize);
            let tau = rng.gen_range(0.5..4.0);
            let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..3.0)).collect();
            let partial: f64 = w.iter().take(m - 1).product();
            w[m - 1] = tau / partial;
            let scalar = ScalarNetwork::new(w.clone(), tau, 1.0).unwrap();
            let lam = scalar_lambda_max(&scalar).unwrap();
            let floor = scalar_widest(tau, m, 1.0).unwrap().sharpness;
            assert!(lam >= floor - 1e-9 * floor);
            let balanced = w.iter().all(|&x| (x.abs() - w[0].abs()).abs() <= 1e-9);
            if (lam - floor).abs() <= 1e-9 * floor {
                assert!(balanced, "equality should pin equal magnitudes: {w:?}");
            }
        }
    }

    #[test]
    fn embedded_scalar_matches_vector_machinery() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for _ in 0..20 {
            let m = 1 + rng.gen_range(0..4usize);
            let tau = rng.gen_range(0.5..3.0);
            let sigma_x2 = rng.gen_range(0.5..2.0);
            let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.3..2.0)).collect();
            let partial: f64 = w.iter().take(m - 1).product();
            w[m - 1] = tau / partial;
            let scalar = ScalarNetwork::new(w, tau, sigma_x2).unwrap();
            let lam = scalar_lambda_max(&scalar).unwrap();
            let (embedded, moments) = scalar.embed();
            let target = TargetMap::from_moments(&moments).unwrap();
            let factor = phi_blocks(&embedded, &moments).unwrap();
            let report = lambda_max(&factor, EigMethod::DenseReduced, &target).unwrap();
            assert!((report.lambda_max - lam).abs() <= 1e-10 * lam);
        }
    }

    #[test]
    fn two_layer_minima_appear_equally_wide() {
        let s = 2.0_f64.sqrt();
        let w1 = net(&[s, s], 2.0);
        for w in [[1.0, 2.0], [4.0, 0.5], [0.1, 20.0]] {
            let (verdict, _, _) = interp_compare(&w1, &net(&w, 2.0)).unwrap();
            assert_eq!(verdict, InterpVerdict::Equal);
        }
    }

    #[test]
    fn three_layer_widest_can_appear_sharper() {
        // tau = 8: the widest (2,2,2) appears sharper than (8,1,1).
        let w1 = net(&[2.0, 2.0, 2.0], 8.0);
        let w2 = net(&[8.0, 1.0, 1.0], 8.0);
        let (verdict, forward, backward) = interp_compare(&w1, &w2).unwrap();
        assert_eq!(verdict, InterpVerdict::W1AppearsSharper);
        assert!((forward - 5.0).abs() <= 1e-12);
        assert!((backward - 4.25).abs() <= 1e-12);
    }

    #[test]
    fn interp_compare_is_antisymmetric_and_reflexive() {
        let w1 = net(&[2.0, 2.0, 2.0], 8.0);
        let w2 = net(&[1.0, 2.0, 4.0], 8.0);
        let (v12, f, b) = interp_compare(&w1, &w2).unwrap();
        let (v21, f2, b2) = interp_compare(&w2, &w1).unwrap();
        assert_eq!(f, b2);
        assert_eq!(b, f2);
        match v12 {
            InterpVerdict::W1AppearsSharper => assert_eq!(v21, InterpVerdict::W2AppearsSharper),
            InterpVerdict::W2AppearsSharper => assert_eq!(v21, InterpVerdict::W1AppearsSharper),
            InterpVerdict::Equal => assert_eq!(v21, InterpVerdict::Equal),
        }
        let (v11, _, _) = interp_compare(&w1, &w1).unwrap();
        assert_eq!(v11, InterpVerdict::Equal);
    }

    #[test]
    fn mixed_signs_and_nonpositive_tau_are_rejected() {
        let w1 = net(&[2.0, 2.0, 2.0], 8.0);
        let flipped = net(&[-2.0, -2.0, 2.0], 8.0);
        assert!(matches!(interp_compare(&w1, &flipped), Err(Error::UnsupportedOrthant(_))));
        let neg1 = net(&[-2.0, 2.0, 2.0], -8.0);
        let neg2 = net(&[2.0, -2.0, 2.0], -8.0);
        assert!(matches!(interp_compare(&neg1, &neg2), Err(Error::UnsupportedOrthant(_))));
    }

    #[test]
    fn deceive_construct_flips_the_verdict() {
        // tau = 8: (0.5, 4, 4) appears sharper than the widest (2,2,2);
        // the construction yields (8,1,1), which appears wider.
        let w1 = net(&[2.0, 2.0, 2.0], 8.0);
        let w2 = net(&[0.5, 4.0, 4.0], 8.0);
        let (v, _, _) = interp_compare(&w1, &w2).unwrap();
        assert_eq!(v, InterpVerdict::W2AppearsSharper);
        let w3 = deceive_construct(&w1, &w2).unwrap();
        assert_eq!(w3.w, vec![8.0, 1.0, 1.0]);
        assert!(w3.in_omega());
        let (v3, _, _) = interp_compare(&w1, &w3).unwrap();
        assert_eq!(v3, InterpVerdict::W1AppearsSharper);
    }

    #[test]
    fn deceive_construct_formula_and_fixed_point() {
        // m = 2 compares equal, so the construction is a plain formula
        // application: (sqrt2, sqrt2) against (2, 1) gives (1, 2).
        let s = 2.0_f64.sqrt();
        let w1 = net(&[s, s], 2.0);
        let w2 = net(&[2.0, 1.0], 2.0);
        let w3 = deceive_construct(&w1, &w2).unwrap();
        assert!((w3.w[0] - 1.0).abs() <= 1e-12 && (w3.w[1] - 2.0).abs() <= 1e-12);
        assert!((w3.product() - 2.0).abs() <= 1e-12);
        // The widest minimum itself is a fixed point.
        let same = deceive_construct(&w1, &w1).unwrap();
        assert!((same.w[0] - s).abs() <= 1e-12 && (same.w[1] - s).abs() <= 1e-12);
    }

    #[test]
    fn deceive_inputs_must_be_widest_first() {
        let w1 = net(&[4.0, 1.0, 2.0], 8.0);
        let w2 = net(&[0.5, 4.0, 4.0], 8.0);
        assert!(deceive_construct(&w1, &w2).is_err());
    }
}
