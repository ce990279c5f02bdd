//! Canonical widest minima and the structural laws they satisfy: the
//! sharpness value of the widest set, the per-depth gain of the top signal,
//! the `√m σ_max^{k/m}` bound on any intermediate gain, and the coupling of
//! consecutive layers along the top-signal path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::{self, EigMethod};
use crate::linalg;
use crate::moments::{end_to_end, is_global_min, moments_from_target, LinearNetwork, TargetMap};

/// Default relative tolerance for verifying a net is a global minimum before
/// structural analysis.
pub const MINIMUM_TOL: f64 = 1e-8;

/// Sharpness of the widest minima: `2m σ_max^{2(1−1/m)}`.
pub fn widest_sharpness(target: &TargetMap, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("depth m must be at least 1".into()));
    }
    Ok(hessian::widest_value(target.sigma_max, m))
}

/// The canonical widest solution: `W_m = U S_m^{1/m}`, interior layers are
/// rectangular diagonals of the m-th roots of the singular values, and
/// `W_1 = S_1^{1/m} Vᵀ`. Every layer has the same set of nonzero singular
/// values, so the sufficient condition for widest minima holds by construction.
pub fn canonical_widest(target: &TargetMap, dims: &[usize]) -> Result<LinearNetwork> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument("dims must list at least d_0 and d_1".into()));
    }
    let m = dims.len() - 1;
    if dims[0] != target.d_x() || dims[m] != target.d_y() {
        return Err(Error::DimensionMismatch(format!(
            "dims must start at d_x = {} and end at d_y = {}",
            target.d_x(),
            target.d_y()
        )));
    }
    let required = target.d_x().min(target.d_y());
    if let Some(&min_dim) = dims.iter().min() {
        if min_dim < required {
            return Err(Error::CapacityViolation { min_dim, required });
        }
    }
    let roots: Vec<f64> = target.singular_values.iter().map(|s| s.powf(1.0 / m as f64)).collect();
    let mut weights = Vec::with_capacity(m);
    for j in 1..=m {
        if m == 1 {
            // Single layer: the target itself, U S V^T.
            weights.push(target.t.clone());
        } else if j == 1 {
            let s1 = linalg::rectangular_diagonal(dims[1], roots.len(), &roots);
            weights.push(s1 * target.right_vectors.transpose());
        } else if j == m {
            let sm = linalg::rectangular_diagonal(roots.len(), dims[m - 1], &roots);
            weights.push(&target.left_vectors * sm);
        } else {
            weights.push(linalg::rectangular_diagonal(dims[j], dims[j - 1], &roots));
        }
    }
    LinearNetwork::new(weights)
}

/// A widest minimum with non-diagonal layers: the canonical solution
/// conjugated by random orthogonal matrices (`W_k → O_k W_k O_{k−1}ᵀ`,
/// `O_0 = O_m = I`). Per-layer spectra are preserved, so the result stays
/// certified widest.
pub fn conjugated_widest<R: Rng>(target: &TargetMap, dims: &[usize], rng: &mut R) -> Result<LinearNetwork> {
    let canonical = canonical_widest(target, dims)?;
    let m = canonical.depth();
    let mut rotations = Vec::with_capacity(m + 1);
    rotations.push(DMatrix::identity(dims[0], dims[0]));
    for &d in dims.iter().take(m).skip(1) {
        rotations.push(linalg::random_orthogonal(rng, d));
    }
    rotations.push(DMatrix::identity(dims[m], dims[m]));
    let weights = canonical
        .weights()
        .iter()
        .enumerate()
        .map(|(k, w)| &rotations[k + 1] * w * rotations[k].transpose())
        .collect();
    LinearNetwork::new(weights)
}

/// Verdict of [`is_widest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidestVerdict {
    /// Every layer has top singular value `σ_max(T)^{1/m}` (sufficient condition).
    CertifiedWidest,
    /// `λ_max` is within the tolerance of the widest value.
    WidestByGap,
    NotWidest,
}

/// Per-layer diagnostics attached to a [`WidestVerdict`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidestDiagnostics {
    /// Top singular value of each layer.
    pub layer_sigma_max: Vec<f64>,
    /// The value every layer should attain, `σ_max(T)^{1/m}`.
    pub layer_target: f64,
    /// Computed `λ_max` at the net.
    pub lambda_max: f64,
    /// `λ_max / widest_sharpness − 1`.
    pub lambda_gap: f64,
}

/// Classify a verified global minimum: certified widest via the per-layer
/// singular-value condition, widest by eigenvalue gap, or not widest.
pub fn is_widest(
    net: &LinearNetwork,
    target: &TargetMap,
    tol: f64,
) -> Result<(WidestVerdict, WidestDiagnostics)> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let (ok, residual) = is_global_min(net, target, MINIMUM_TOL)?;
    if !ok {
        return Err(Error::NotGlobalMinimum { residual, tol: MINIMUM_TOL * target.t.norm().max(1.0) });
    }
    let m = net.depth();
    let layer_target = target.sigma_max.powf(1.0 / m as f64);
    let layer_sigma_max: Vec<f64> = net.weights().iter().map(linalg::spectral_norm).collect();

    let (moments, _) = moments_from_target(&target.t);
    let factor = hessian::phi_blocks(net, &moments)?;
    let report = hessian::lambda_max(&factor, EigMethod::DenseReduced, target)?;
    let widest = widest_sharpness(target, m)?;
    let lambda_gap = if widest > 0.0 { report.lambda_max / widest - 1.0 } else { 0.0 };

    let diagnostics = WidestDiagnostics {
        layer_sigma_max: layer_sigma_max.clone(),
        layer_target,
        lambda_max: report.lambda_max,
        lambda_gap,
    };

    let certified = layer_sigma_max
        .iter()
        .all(|&s| (s - layer_target).abs() <= tol * layer_target.max(f64::MIN_POSITIVE));
    let verdict = if certified && target.sigma_max > 0.0 {
        WidestVerdict::CertifiedWidest
    } else if lambda_gap <= tol {
        WidestVerdict::WidestByGap
    } else {
        WidestVerdict::NotWidest
    };
    Ok((verdict, diagnostics))
}

/// Gains experienced by signals as they propagate, depth by depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainProfile {
    /// For each `k ∈ 0..=m`, the singular values of `∏_{j≤k} W_j`, nonincreasing.
    pub per_depth_singulars: Vec<Vec<f64>>,
    /// For each `k`, the singular values of `∏_{i>k} W_i`, nonincreasing.
    pub suffix_singulars: Vec<Vec<f64>>,
    /// `‖∏_{j≤k} W_j v‖` — the gain of the top input signal up to depth `k`.
    pub v_gain: Vec<f64>,
    /// `‖(∏_{i>k} W_i)ᵀ u‖` — the adjoint gain of the top output signal.
    pub u_gain: Vec<f64>,
    /// The intermediate-gain bound `√m σ_max^{k/m}`.
    pub bound: Vec<f64>,
    /// `‖(∏_{j≤k} W_j)ᵀ(∏_{j≤k} W_j) v − σ_max^{2k/m} v‖`: zero iff `v` is a
    /// singular vector of the partial product with the law's singular value.
    pub v_singvec_residuals: Vec<f64>,
    /// Depth of the profiled network.
    pub depth: usize,
    /// `σ_max(T)` used for the laws.
    pub sigma_max: f64,
}

/// Profile the per-depth gains of `net` with respect to the top singular
/// triplet of `target`. No law is asserted here; see [`verify_gains`].
pub fn gain_profile(net: &LinearNetwork, target: &TargetMap) -> Result<GainProfile> {
    let (ok, residual) = is_global_min(net, target, MINIMUM_TOL)?;
    if !ok {
        return Err(Error::NotGlobalMinimum { residual, tol: MINIMUM_TOL * target.t.norm().max(1.0) });
    }
    let m = net.depth();
    let mut per_depth = Vec::with_capacity(m + 1);
    let mut suffix = Vec::with_capacity(m + 1);
    let mut v_gain = Vec::with_capacity(m + 1);
    let mut u_gain = Vec::with_capacity(m + 1);
    let mut bound = Vec::with_capacity(m + 1);
    let mut v_res = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let prefix = end_to_end(net, 1, k)?;
        let tail = end_to_end(net, k + 1, m)?;
        per_depth.push(linalg::singular_values_desc(&prefix));
        suffix.push(linalg::singular_values_desc(&tail));
        v_gain.push((&prefix * &target.v).norm());
        u_gain.push((tail.transpose() * &target.u).norm());
        bound.push((m as f64).sqrt() * target.sigma_max.powf(k as f64 / m as f64));
        let law = target.sigma_max.powf(2.0 * k as f64 / m as f64);
        v_res.push((prefix.transpose() * (&prefix * &target.v) - law * &target.v).norm());
    }
    Ok(GainProfile {
        per_depth_singulars: per_depth,
        suffix_singulars: suffix,
        v_gain,
        u_gain,
        bound,
        v_singvec_residuals: v_res,
        depth: m,
        sigma_max: target.sigma_max,
    })
}

/// Result of checking one depth of a [`GainProfile`] against the laws of
/// widest minima.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainCheck {
    pub depth: usize,
    /// `|v_gain[k] − σ^{k/m}| ≤ tol σ^{k/m}`.
    pub v_gain_ok: bool,
    /// `σ_max(∏_{j≤k} W_j) ≤ √m σ^{k/m} (1+tol)`.
    pub prefix_bound_ok: bool,
    /// Mirror of `v_gain_ok` for `u_gain[k]` against `σ^{1−k/m}`.
    pub u_gain_ok: bool,
    /// Mirror of `prefix_bound_ok` for the suffix product.
    pub suffix_bound_ok: bool,
    /// `v` is a singular vector of the partial product within `tol`.
    pub v_singvec_ok: bool,
}

impl GainCheck {
    pub fn all_ok(&self) -> bool {
        self.v_gain_ok && self.prefix_bound_ok && self.u_gain_ok && self.suffix_bound_ok && self.v_singvec_ok
    }
}

/// Check the intermediate-gain laws at every depth of a profile taken from a
/// candidate widest net. Returns one report per depth `k ∈ 0..=m`.
pub fn verify_gains(profile: &GainProfile, m: usize, sigma_max: f64, tol: f64) -> Result<Vec<GainCheck>> {
    if m == 0 || profile.depth != m {
        return Err(Error::InvalidArgument(format!(
            "profile depth {} does not match m = {m}",
            profile.depth
        )));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let mut out = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let v_law = sigma_max.powf(k as f64 / m as f64);
        let u_law = sigma_max.powf(1.0 - k as f64 / m as f64);
        let prefix_top = profile.per_depth_singulars[k].first().copied().unwrap_or(0.0);
        let suffix_top = profile.suffix_singulars[k].first().copied().unwrap_or(0.0);
        out.push(GainCheck {
            depth: k,
            v_gain_ok: (profile.v_gain[k] - v_law).abs() <= tol * v_law.max(f64::MIN_POSITIVE),
            prefix_bound_ok: prefix_top <= (m as f64).sqrt() * v_law * (1.0 + tol),
            u_gain_ok: (profile.u_gain[k] - u_law).abs() <= tol * u_law.max(f64::MIN_POSITIVE),
            suffix_bound_ok: suffix_top <= (m as f64).sqrt() * u_law * (1.0 + tol),
            v_singvec_ok: profile.v_singvec_residuals[k] <= tol,
        });
    }
    Ok(out)
}

/// The coupled singular-vector chain along the top-signal path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    /// `r_k = ∏_{j<k} W_j v` for `k ∈ 1..=m`.
    pub r_vectors: Vec<Vec<f64>>,
    /// `q_k = (∏_{i>k} W_i)ᵀ u` for `k ∈ 1..=m`.
    pub q_vectors: Vec<Vec<f64>>,
    /// `‖W_k r̄_k − σ^{1/m} q̄_k‖` per layer: zero iff `(q̄_k, r̄_k)` is a
    /// singular pair of `W_k` with value `σ_max^{1/m}`.
    pub singular_residuals: Vec<f64>,
    /// `‖r̄_{k+1} − q̄_k‖` for `k ∈ 1..m`: zero iff consecutive layers couple.
    pub coupling_residuals: Vec<f64>,
    /// `|‖q_k‖·‖r_k‖ − σ^{1−1/m}|` per layer.
    pub balance_residuals: Vec<f64>,
}

/// Measure the layer-coupling structure of a verified global minimum. At
/// widest minima every residual vanishes and `‖r_k‖ = σ^{(k−1)/m}`,
/// `‖q_k‖ = σ^{1−k/m}`.
pub fn coupling_report(net: &LinearNetwork, target: &TargetMap) -> Result<CouplingReport> {
    if target.sigma_max <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let (ok, residual) = is_global_min(net, target, MINIMUM_TOL)?;
    if !ok {
        return Err(Error::NotGlobalMinimum { residual, tol: MINIMUM_TOL * target.t.norm().max(1.0) });
    }
    let m = net.depth();
    let root = target.sigma_max.powf(1.0 / m as f64);
    let mut r = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    for k in 1..=m {
        r.push(end_to_end(net, 1, k - 1)? * &target.v);
        q.push(end_to_end(net, k + 1, m)?.transpose() * &target.u);
    }
    let unit = |v: &DVector<f64>| v / v.norm();
    let singular_residuals: Vec<f64> = (0..m)
        .map(|k| (&net.weights()[k] * unit(&r[k]) - root * unit(&q[k])).norm())
        .collect();
    let coupling_residuals: Vec<f64> =
        (0..m - 1).map(|k| (unit(&r[k + 1]) - unit(&q[k])).norm()).collect();
    let law = target.sigma_max.powf(1.0 - 1.0 / m as f64);
    let balance_residuals: Vec<f64> =
        (0..m).map(|k| (q[k].norm() * r[k].norm() - law).abs()).collect();
    Ok(CouplingReport {
        r_vectors: r.iter().map(|v| v.as_slice().to_vec()).collect(),
        q_vectors: q.iter().map(|v| v.as_slice().to_vec()).collect(),
        singular_residuals,
        coupling_residuals,
        balance_residuals,
    })
}
