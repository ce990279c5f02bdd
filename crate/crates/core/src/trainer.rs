//! Full-batch gradient descent on linear networks, with identity
//! initialization, balancedness tracking along the trajectory, and the
//! escape-from-sharp-minima experiment.
//!
//! Gradient flow is realized as small-step Euler GD behind the same update
//! kernel; the conservation law `W_i W_iᵀ = W_{i+1}ᵀ W_{i+1}` then holds up to
//! an `O(η)` integration error that the trace records.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::{self, EigMethod};
use crate::moments::{gradient, loss, DataMoments, LinearNetwork, TargetMap};

/// Loss level treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Gradient norm required (together with `loss_tol`) to declare convergence.
pub const GRAD_TOL: f64 = 1e-10;
/// Cap on the Euler step in gradient-flow mode.
pub const FLOW_ETA_MAX: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Gd,
    /// Euler discretization of gradient flow; enforces `eta ≤ 1e-3`.
    GradientFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step size η.
    pub eta: f64,
    pub max_iters: u64,
    /// Stop once the loss drops to this level (and the gradient is small).
    pub loss_tol: f64,
    pub mode: TrainMode,
    /// Sampling stride for the recorded histories.
    pub record_every: u64,
    /// Used only for perturbed initializations.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(eta: f64) -> Self {
        Self { eta, max_iters: 200_000, loss_tol: 1e-12, mode: TrainMode::Gd, record_every: 100, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 {
            return Err(Error::InvalidArgument("eta must be positive".into()));
        }
        if self.mode == TrainMode::GradientFlow && self.eta > FLOW_ETA_MAX {
            return Err(Error::InvalidArgument(format!(
                "gradient-flow mode requires eta <= {FLOW_ETA_MAX}"
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// Recorded trajectory of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Iteration numbers at which the histories were sampled.
    pub iterations: Vec<u64>,
    pub loss_history: Vec<f64>,
    /// `max_k ‖W_k W_kᵀ − W_{k+1}ᵀ W_{k+1}‖_F` at each sample.
    pub balance_residuals: Vec<f64>,
    /// `(w_1, w_2)` path for two-layer scalar runs, at the same samples.
    pub scalar_path: Option<Vec<[f64; 2]>>,
    pub final_net: LinearNetwork,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    /// Loss and gradient both reached their tolerances.
    pub converged: bool,
    /// Loss exceeded [`DIVERGENCE_LIMIT`].
    pub diverged: bool,
    /// Count of recorded loss increases (possible above the stable step size;
    /// flagged rather than hidden).
    pub loss_increases: u64,
    /// `λ_max` at the endpoint, when the endpoint is a global minimum.
    pub final_lambda_max: Option<f64>,
}

/// All-identity initialization; requires every dimension equal (the linear
/// ResNet setting with zero residual init).
pub fn identity_init(dims: &[usize]) -> Result<LinearNetwork> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument("dims must list at least d_0 and d_1".into()));
    }
    let d = dims[0];
    if dims.iter().any(|&x| x != d) {
        return Err(Error::InvalidArgument("identity initialization needs square layers throughout".into()));
    }
    LinearNetwork::new(vec![DMatrix::identity(d, d); dims.len() - 1])
}

/// The convergence step-size bound for identity-initialized GD on a positive
/// definite target: `(1/m) · min{1, σ_max(T)^{−2(1−1/m)}}`.
pub fn max_step_size(target: &TargetMap, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("depth m must be at least 1".into()));
    }
    let exponent = -2.0 * (1.0 - 1.0 / m as f64);
    Ok((1.0 / m as f64) * target.sigma_max.powf(exponent).min(1.0))
}

/// Run full-batch GD (or Euler gradient flow) from `start`, recording losses
/// and balance residuals every `record_every` iterations plus the final state.
pub fn train(start: &LinearNetwork, moments: &DataMoments, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    let target = TargetMap::from_moments(moments)?;
    let is_scalar_pair = start.depth() == 2 && start.n_params() == 2;

    let mut net = start.clone();
    let mut trace = TrainTrace {
        iterations: Vec::new(),
        loss_history: Vec::new(),
        balance_residuals: Vec::new(),
        scalar_path: is_scalar_pair.then(Vec::new),
        final_net: net.clone(),
        final_loss: f64::NAN,
        final_grad_norm: f64::NAN,
        converged: false,
        diverged: false,
        loss_increases: 0,
        final_lambda_max: None,
    };

    let mut last_recorded_loss = f64::INFINITY;
    let mut record = |trace: &mut TrainTrace, it: u64, l: f64, net: &LinearNetwork| {
        trace.iterations.push(it);
        trace.loss_history.push(l);
        trace.balance_residuals.push(balance_residual(net));
        if let Some(path) = trace.scalar_path.as_mut() {
            path.push([net.weights()[0][(0, 0)], net.weights()[1][(0, 0)]]);
        }
        if l > last_recorded_loss {
            trace.loss_increases += 1;
        }
        last_recorded_loss = l;
    };

    let mut it = 0u64;
    loop {
        let l = loss(&net, moments)?;
        if !l.is_finite() {
            return Err(Error::NumericalFailure(format!("loss is not finite at iteration {it}")));
        }
        let grads = gradient(&net, moments)?;
        let grad_norm = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NumericalFailure(format!("gradient is not finite at iteration {it}")));
        }

        if it % cfg.record_every == 0 {
            record(&mut trace, it, l, &net);
        }

        if l <= cfg.loss_tol && grad_norm <= GRAD_TOL {
            trace.converged = true;
            trace.final_loss = l;
            trace.final_grad_norm = grad_norm;
            break;
        }
        if l > DIVERGENCE_LIMIT {
            trace.diverged = true;
            trace.final_loss = l;
            trace.final_grad_norm = grad_norm;
            break;
        }
        if it >= cfg.max_iters {
            trace.final_loss = l;
            trace.final_grad_norm = grad_norm;
            break;
        }

        for (w, g) in net.weights_mut().iter_mut().zip(&grads) {
            *w -= cfg.eta * g;
        }
        it += 1;
    }

    if trace.iterations.last() != Some(&it) {
        let final_loss = trace.final_loss;
        record(&mut trace, it, final_loss, &net);
    }
    // Sharpness at the endpoint, when it landed on the minima manifold.
    if let Ok((true, _)) = crate::moments::is_global_min(&net, &target, 1e-6) {
        let factor = hessian::phi_blocks(&net, moments)?;
        let method = if net.d_x() * net.d_y() <= 64 * 64 {
            EigMethod::DenseReduced
        } else {
            EigMethod::PowerIteration
        };
        trace.final_lambda_max = Some(hessian::lambda_max(&factor, method, &target)?.lambda_max);
    }
    trace.final_net = net;
    Ok(trace)
}

/// `max_k ‖W_k W_kᵀ − W_{k+1}ᵀ W_{k+1}‖_F`; zero exactly under gradient flow
/// from identity init.
pub fn balance_residual(net: &LinearNetwork) -> f64 {
    let ws = net.weights();
    let mut worst: f64 = 0.0;
    for k in 0..ws.len().saturating_sub(1) {
        let left = &ws[k] * ws[k].transpose();
        let right = ws[k + 1].transpose() * &ws[k + 1];
        worst = worst.max((left - right).norm());
    }
    worst
}

/// Perturb a global minimum and run GD. With `λ_max > 2/η` the iterates leave
/// the sharp minimum and traverse the valley; the run never early-stops, so
/// the endpoint reflects where the dynamics actually settle.
pub fn escape_experiment(
    sharp_net: &LinearNetwork,
    moments: &DataMoments,
    eta: f64,
    perturbation: f64,
    iters: u64,
    seed: u64,
) -> Result<TrainTrace> {
    if eta <= 0.0 {
        return Err(Error::InvalidArgument("eta must be positive".into()));
    }
    if perturbation < 0.0 {
        return Err(Error::InvalidArgument("perturbation must be nonnegative".into()));
    }
    let target = TargetMap::from_moments(moments)?;
    let (ok, residual) = crate::moments::is_global_min(sharp_net, &target, 1e-8)?;
    if !ok {
        return Err(Error::NotGlobalMinimum { residual, tol: 1e-8 * target.t.norm().max(1.0) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = sharp_net.clone();
    for w in start.weights_mut() {
        for entry in w.iter_mut() {
            *entry += perturbation * (2.0 * rng.gen::<f64>() - 1.0);
        }
    }
    let cfg = TrainConfig {
        eta,
        max_iters: iters,
        // Never early-stop: escape needs the full run.
        loss_tol: -1.0,
        mode: TrainMode::Gd,
        record_every: 1.max(iters / 2_000),
        seed,
    };
    train(&start, moments, &cfg)
}
