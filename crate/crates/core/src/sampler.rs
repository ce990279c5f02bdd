//! Sampling of arbitrary global minima and the greedy random walk over the
//! minima manifold that descends `λ_max` toward the widest value.
//!
//! Both constructions conjugate the canonical widest solution by random
//! invertible matrices, so the end-to-end product is preserved exactly up to
//! floating error.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::{self, EigMethod};
use crate::linalg;
use crate::moments::{moments_from_target, LinearNetwork, TargetMap};
use crate::widest::canonical_widest;

/// Resample random conjugation matrices whose condition number exceeds this.
pub const CONDITION_LIMIT: f64 = 1e6;
/// Rescale a layer whenever the relative product drift exceeds this.
pub const DRIFT_TOL: f64 = 1e-9;
/// Switch the walk's eigenvalue evaluation to power iteration above this
/// reduced dimension.
pub const DENSE_REDUCED_LIMIT: usize = 64 * 64;

/// Configuration of the greedy widest walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Initial step size ε.
    pub eps0: f64,
    /// Multiplier applied to ε after `patience` consecutive rejections.
    pub shrink: f64,
    /// Consecutive rejections before shrinking ε.
    pub patience: u32,
    /// Total proposal budget.
    pub max_iters: u64,
    /// Terminate once `λ_max ≤ stop_ratio · widest value`.
    pub stop_ratio: f64,
    /// Floor for ε; shrinking never goes below this.
    #[serde(default = "default_eps_min")]
    pub eps_min: f64,
    /// RNG seed; the walk is deterministic given the config.
    pub seed: u64,
}

fn default_eps_min() -> f64 {
    1e-4
}

impl WalkConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            eps0: 1e-2,
            shrink: 0.5,
            patience: 25,
            max_iters: 200_000,
            stop_ratio: 1.01,
            eps_min: default_eps_min(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps0 <= 0.0 || self.eps_min <= 0.0 {
            return Err(Error::InvalidArgument("eps0 and eps_min must be positive".into()));
        }
        if !(0.0 < self.shrink && self.shrink < 1.0) {
            return Err(Error::InvalidArgument("shrink must lie in (0, 1)".into()));
        }
        if self.patience == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument("patience and max_iters must be positive".into()));
        }
        if self.stop_ratio < 1.0 {
            return Err(Error::InvalidArgument("stop_ratio must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a greedy widest walk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkTrace {
    /// `λ_max` before the first step.
    pub initial_lambda: f64,
    /// `λ_max` after each accepted step; strictly decreasing.
    pub lambda_history: Vec<f64>,
    /// ε used at each accepted step.
    pub eps_history: Vec<f64>,
    pub accept_count: u64,
    pub reject_count: u64,
    /// Final iterate; a global minimum of the target within 1e-8.
    pub final_net: LinearNetwork,
    /// Reached `stop_ratio · widest` within the budget.
    pub converged: bool,
    /// The Theorem floor `2m σ_max^{2(1−1/m)}` the walk descends toward.
    pub widest_value: f64,
    /// Seed echoed from the config.
    pub seed: u64,
}

fn require_square_interior(dims: &[usize]) -> Result<()> {
    let m = dims.len() - 1;
    for j in 2..m {
        if dims[j] != dims[j - 1] {
            return Err(Error::UnsupportedShape(format!(
                "interior layer {j} is {}x{}; walks and samplers need square interior layers",
                dims[j],
                dims[j - 1]
            )));
        }
    }
    Ok(())
}

/// Conjugation matrices for [`sample_arbitrary_minimum`]; exposed so tests can
/// drive the construction with explicit matrices (identity recovers the
/// canonical net exactly).
pub fn arbitrary_minimum_from_directions(
    target: &TargetMap,
    dims: &[usize],
    directions: &[DMatrix<f64>],
) -> Result<LinearNetwork> {
    let m = dims.len() - 1;
    if directions.len() != m.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!(
            "need {} direction matrices, got {}",
            m - 1,
            directions.len()
        )));
    }
    require_square_interior(dims)?;
    let canonical = canonical_widest(target, dims)?;
    if m == 1 {
        return Ok(canonical);
    }
    let mut inverses = Vec::with_capacity(m - 1);
    for a in directions {
        inverses.push(linalg::invert(a)?);
    }
    let mut weights = Vec::with_capacity(m);
    for (k, w) in canonical.weights().iter().enumerate() {
        let j = k + 1;
        let mut new = w.clone();
        if j >= 2 {
            new = &new * &directions[j - 2];
        }
        if j <= m - 1 {
            new = &inverses[j - 1] * new;
        }
        weights.push(new);
    }
    LinearNetwork::new(weights)
}

/// Sample an arbitrary global minimum by conjugating the canonical solution
/// with i.i.d. standard-normal matrices (`W_m = U S_m^{1/m} A_{m−1}`,
/// `W_i = A_i⁻¹ S_i^{1/m} A_{i−1}`, `W_1 = A_1⁻¹ S_1^{1/m} Vᵀ`). Matrices with
/// condition number above [`CONDITION_LIMIT`] are resampled.
pub fn sample_arbitrary_minimum(target: &TargetMap, dims: &[usize], seed: u64) -> Result<LinearNetwork> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument("dims must list at least d_0 and d_1".into()));
    }
    require_square_interior(dims)?;
    let m = dims.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions = Vec::with_capacity(m.saturating_sub(1));
    for j in 1..m {
        loop {
            let a = linalg::standard_normal_matrix(&mut rng, dims[j], dims[j]);
            if linalg::condition_number(&a) <= CONDITION_LIMIT {
                directions.push(a);
                break;
            }
        }
    }
    arbitrary_minimum_from_directions(target, dims, &directions)
}

/// Greedy random walk over the minima manifold: propose the conjugated update
/// `W_m ← W_m (I+εA_{m−1})`, `W_i ← (I+εA_i)⁻¹ W_i (I+εA_{i−1})`,
/// `W_1 ← (I+εA_1)⁻¹ W_1`, accept only when `λ_max` strictly decreases, and
/// stop once `λ_max ≤ stop_ratio · widest value`.
///
/// ε starts at `eps0`, shrinks by `shrink` (floored at `eps_min`) after
/// `patience` consecutive rejections, and after every accepted step is
/// re-centered on the remaining gap (`ε = clamp(gap/4, eps_min, eps0)`), which
/// keeps proposals commensurate with the progress still to make.
pub fn greedy_widest_walk(
    start: &LinearNetwork,
    target: &TargetMap,
    cfg: &WalkConfig,
) -> Result<WalkTrace> {
    cfg.validate()?;
    require_square_interior(start.dims())?;
    let (ok, residual) = crate::moments::is_global_min(start, target, 1e-8)?;
    if !ok {
        return Err(Error::NotGlobalMinimum { residual, tol: 1e-8 * target.t.norm().max(1.0) });
    }
    let m = start.depth();
    let (moments, _) = moments_from_target(&target.t);
    let widest = hessian::widest_value(target.sigma_max, m);
    let method = if target.d_x() * target.d_y() <= DENSE_REDUCED_LIMIT {
        EigMethod::DenseReduced
    } else {
        EigMethod::PowerIteration
    };
    let eval = |net: &LinearNetwork| -> Result<f64> {
        let factor = hessian::phi_blocks(net, &moments)?;
        Ok(hessian::lambda_max(&factor, method, target)?.lambda_max)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = start.clone();
    let mut lambda = eval(&current)?;
    let initial_lambda = lambda;
    let target_norm = target.t.norm().max(1.0);

    let clamp_eps = |eps: f64| eps.clamp(cfg.eps_min, cfg.eps0);
    let gap_eps = |lambda: f64| {
        if widest > 0.0 { clamp_eps((lambda / widest - 1.0) * 0.25) } else { cfg.eps_min }
    };

    let mut trace = WalkTrace {
        initial_lambda,
        lambda_history: Vec::new(),
        eps_history: Vec::new(),
        accept_count: 0,
        reject_count: 0,
        final_net: current.clone(),
        converged: lambda <= cfg.stop_ratio * widest,
        widest_value: widest,
        seed: cfg.seed,
    };
    if trace.converged {
        return Ok(trace);
    }

    let mut eps = clamp_eps(cfg.eps0.min(gap_eps(lambda)));
    let mut consecutive_rejects = 0u32;
    let mut proposals = 0u64;
    while proposals < cfg.max_iters {
        proposals += 1;
        let proposal = match propose(&current, eps, &mut rng) {
            Some(net) => net,
            // (I + εA) numerically singular: resample the direction.
            None => continue,
        };
        let lambda_new = eval(&proposal)?;
        if lambda_new < lambda {
            current = proposal;
            lambda = lambda_new;
            trace.accept_count += 1;
            trace.lambda_history.push(lambda);
            trace.eps_history.push(eps);
            consecutive_rejects = 0;
            // Keep Ω membership exact: rescale W_1 if the product drifted.
            let drift = (current.product() - &target.t).norm();
            if drift > DRIFT_TOL * target_norm {
                let scale = target.t.norm() / current.product().norm();
                current.weights_mut()[0] *= scale;
            }
            if lambda <= cfg.stop_ratio * widest {
                trace.converged = true;
                break;
            }
            eps = gap_eps(lambda);
        } else {
            trace.reject_count += 1;
            consecutive_rejects += 1;
            if consecutive_rejects >= cfg.patience {
                eps = clamp_eps(eps * cfg.shrink);
                consecutive_rejects = 0;
            }
        }
    }
    trace.final_net = current;
    Ok(trace)
}

fn propose<R: Rng>(net: &LinearNetwork, eps: f64, rng: &mut R) -> Option<LinearNetwork> {
    let m = net.depth();
    let dims = net.dims();
    let mut shifted = Vec::with_capacity(m - 1);
    let mut inverses = Vec::with_capacity(m - 1);
    for j in 1..m {
        let a = linalg::standard_normal_matrix(rng, dims[j], dims[j]);
        let shift = DMatrix::identity(dims[j], dims[j]) + eps * a;
        let inv = shift.clone().try_inverse()?;
        shifted.push(shift);
        inverses.push(inv);
    }
    let mut weights = Vec::with_capacity(m);
    for (k, w) in net.weights().iter().enumerate() {
        let j = k + 1;
        let mut new = w.clone();
        if j >= 2 {
            new = &new * &shifted[j - 2];
        }
        if j <= m - 1 {
            new = &inverses[j - 1] * new;
        }
        weights.push(new);
    }
    LinearNetwork::new(weights).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::is_global_min;
    use crate::widest::widest_sharpness;

    fn random_target(seed: u64, d: usize) -> TargetMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TargetMap::from_matrix(linalg::standard_normal_matrix(&mut rng, d, d))
    }

    #[test]
    fn identity_directions_recover_canonical_net() {
        let target = random_target(1, 3);
        let dims = [3, 3, 3, 3];
        let directions = vec![DMatrix::identity(3, 3); 2];
        let net = arbitrary_minimum_from_directions(&target, &dims, &directions).unwrap();
        let canonical = canonical_widest(&target, &dims).unwrap();
        for (a, b) in net.weights().iter().zip(canonical.weights()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn sampled_minima_are_global_minima_and_usually_sharp() {
        let target = random_target(2, 4);
        let net = sample_arbitrary_minimum(&target, &[4; 7], 42).unwrap();
        let (ok, res) = is_global_min(&net, &target, 1e-8).unwrap();
        assert!(ok, "residual {res}");
        let (moments, _) = moments_from_target(&target.t);
        let factor = hessian::phi_blocks(&net, &moments).unwrap();
        let lam = hessian::lambda_max(&factor, EigMethod::DenseReduced, &target).unwrap().lambda_max;
        let widest = widest_sharpness(&target, 6).unwrap();
        assert!(lam > 2.0 * widest, "random minima are typically much sharper: {lam} vs {widest}");
    }

    #[test]
    fn different_seeds_same_product() {
        let target = random_target(3, 3);
        let a = sample_arbitrary_minimum(&target, &[3; 5], 1).unwrap();
        let b = sample_arbitrary_minimum(&target, &[3; 5], 2).unwrap();
        assert!((a.product() - b.product()).norm() <= 1e-8 * target.t.norm());
        assert!((a.weights()[0].clone() - b.weights()[0].clone()).norm() > 1e-3);
    }

    #[test]
    fn non_square_interior_is_rejected() {
        let target = random_target(4, 2);
        let err = sample_arbitrary_minimum(&target, &[2, 3, 4, 2], 0).unwrap_err();
        assert!(matches!(err, Error::UnsupportedShape(_)));
    }

    #[test]
    fn walk_from_canonical_converges_immediately() {
        let target = random_target(5, 3);
        let start = canonical_widest(&target, &[3; 4]).unwrap();
        let cfg = WalkConfig::new(7);
        let trace = greedy_widest_walk(&start, &target, &cfg).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.accept_count, 0);
        assert!(trace.lambda_history.is_empty());
    }

    #[test]
    fn walk_descends_to_the_floor_and_stays_on_manifold() {
        let target = random_target(6, 4);
        let start = sample_arbitrary_minimum(&target, &[4; 7], 11).unwrap();
        let cfg = WalkConfig::new(13);
        let trace = greedy_widest_walk(&start, &target, &cfg).unwrap();
        assert!(trace.converged, "ratio {}", trace.lambda_history.last().unwrap() / trace.widest_value);
        let widest = widest_sharpness(&target, 6).unwrap();
        assert!(*trace.lambda_history.last().unwrap() <= 1.01 * widest);
        // Strict monotone descent, floor respected.
        let mut prev = trace.initial_lambda;
        for &l in &trace.lambda_history {
            assert!(l < prev);
            assert!(l >= widest - 1e-6);
            prev = l;
        }
        let (ok, _) = is_global_min(&trace.final_net, &target, 1e-8).unwrap();
        assert!(ok);
        assert_eq!(trace.lambda_history.len() as u64, trace.accept_count);
    }

    #[test]
    fn walk_is_reproducible_for_fixed_seed() {
        let target = random_target(8, 3);
        let start = sample_arbitrary_minimum(&target, &[3; 5], 21).unwrap();
        let cfg = WalkConfig { stop_ratio: 1.05, ..WalkConfig::new(33) };
        let a = greedy_widest_walk(&start, &target, &cfg).unwrap();
        let b = greedy_widest_walk(&start, &target, &cfg).unwrap();
        assert_eq!(a.lambda_history, b.lambda_history);
        assert_eq!(a.accept_count, b.accept_count);
        assert_eq!(a.reject_count, b.reject_count);
        for (wa, wb) in a.final_net.weights().iter().zip(b.final_net.weights()) {
            assert_eq!(wa, wb, "bitwise-identical iterates expected");
        }
    }

    #[test]
    fn walk_rejects_bad_configs_and_non_minima() {
        let target = random_target(9, 2);
        let start = canonical_widest(&target, &[2, 2, 2]).unwrap();
        let mut cfg = WalkConfig::new(0);
        cfg.stop_ratio = 0.5;
        assert!(greedy_widest_walk(&start, &target, &cfg).is_err());
        let off = LinearNetwork::new(vec![DMatrix::identity(2, 2); 2]).unwrap();
        assert!(matches!(
            greedy_widest_walk(&off, &target, &WalkConfig::new(0)),
            Err(Error::NotGlobalMinimum { .. })
        ));
    }
}
