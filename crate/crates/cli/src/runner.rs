//! Batch execution: one experiment kind, `trials` seeded trials (trial `i`
//! uses `base_seed + i`), optional parallelism, deterministic bundle assembly.

use flatminima_core::{
    canonical_widest, coupling_report, escape_experiment, gain_profile, greedy_widest_walk,
    identity_init, interp_compare, lambda_max, max_step_size, phi_blocks, sample_arbitrary_minimum,
    scalar_lambda_max, scalar_widest, train, widest_sharpness, InterpVerdict, ScalarNetwork,
    TrainConfig, TrainMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bundle::{
    scalar_contour, scalar_section, scalars_of, EscapeTrial, GainsTrial, ReportBundle,
    ScalarInterpTrial, SharpnessTrial, Summary, TrainTrial, TrialOutcome, TrialReport, WalkTrial,
};
use crate::config::{white_moments, ExperimentConfig, ExperimentKind, NetChoice};
use crate::CliError;

/// Environment variable that overrides the config's base seed.
pub const SEED_ENV: &str = "FLATMINIMA_SEED";

// Distinct derived seeds so the target draw and the minima/walk draws never
// share an RNG stream.
const MINIMUM_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;
const WALK_SEED_OFFSET: u64 = 0x6a09_e667_f3bc_c909;

/// Effective base seed: `FLATMINIMA_SEED` when set, else the config's.
pub fn effective_base_seed(config: &ExperimentConfig) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got {text:?}"))),
        Err(_) => Ok(config.base_seed),
    }
}

/// Run every trial of the configured experiment. Trials run concurrently up
/// to `jobs`; the bundle lists them in trial order regardless.
pub fn run(config: &ExperimentConfig, jobs: usize) -> Result<ReportBundle, CliError> {
    config.validate()?;
    let base_seed = effective_base_seed(config)?;
    let indices: Vec<usize> = (0..config.trials).collect();
    let run_one = |&i: &usize| -> TrialOutcome {
        let seed = base_seed.wrapping_add(i as u64);
        match run_trial(config, seed) {
            Ok(report) => TrialOutcome { trial: i, seed, status: "ok".into(), error: None, report: Some(report) },
            Err(e) => TrialOutcome { trial: i, seed, status: "error".into(), error: Some(e.to_string()), report: None },
        }
    };
    let trials: Vec<TrialOutcome> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        pool.install(|| indices.par_iter().map(run_one).collect())
    } else {
        indices.iter().map(run_one).collect()
    };
    let summary = Summary::from_trials(&trials);
    Ok(ReportBundle {
        format: flatminima_core::FORMAT_VERSION.to_string(),
        created_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        base_seed,
        config: config.clone(),
        trials,
        summary,
    })
}

fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialReport, CliError> {
    match config.experiment {
        ExperimentKind::Sharpness => sharpness_trial(config, seed),
        ExperimentKind::GainsFigure => gains_trial(config, seed),
        ExperimentKind::Walk => walk_trial(config, seed),
        ExperimentKind::Train => train_trial(config, seed),
        ExperimentKind::ScalarInterp => scalar_interp_trial(config, seed),
        ExperimentKind::Escape => escape_trial(config, seed),
    }
}

fn sharpness_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialReport, CliError> {
    let spec = config.sharpness.clone().unwrap_or_default();
    let target = config.target.as_ref().expect("validated").resolve(seed)?;
    let dims = config.network.as_ref().expect("validated").dims_for(&target);
    let net = match spec.net {
        NetChoice::Canonical => canonical_widest(&target, &dims)?,
        NetChoice::Arbitrary => {
            sample_arbitrary_minimum(&target, &dims, seed.wrapping_add(MINIMUM_SEED_OFFSET))?
        }
    };
    let moments = white_moments(&target);
    let factor = phi_blocks(&net, &moments)?;
    let report = lambda_max(&factor, spec.method, &target)?;
    Ok(TrialReport::Sharpness(SharpnessTrial {
        sigma_max: target.sigma_max,
        depth: dims.len() - 1,
        report,
    }))
}

fn gains_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialReport, CliError> {
    let target = config.target.as_ref().expect("validated").resolve(seed)?;
    let dims = config.network.as_ref().expect("validated").dims_for(&target);
    let m = dims.len() - 1;
    let moments = white_moments(&target);
    let widest = widest_sharpness(&target, m)?;

    let arbitrary = sample_arbitrary_minimum(&target, &dims, seed.wrapping_add(MINIMUM_SEED_OFFSET))?;
    let arbitrary_profile = gain_profile(&arbitrary, &target)?;
    let factor = phi_blocks(&arbitrary, &moments)?;
    let arbitrary_lambda =
        lambda_max(&factor, flatminima_core::EigMethod::DenseReduced, &target)?.lambda_max;

    let walk_cfg = config
        .walk
        .clone()
        .unwrap_or_default()
        .to_config(seed.wrapping_add(WALK_SEED_OFFSET));
    let trace = greedy_widest_walk(&arbitrary, &target, &walk_cfg)?;
    let widest_profile = gain_profile(&trace.final_net, &target)?;
    let widest_coupling = coupling_report(&trace.final_net, &target)?;
    let final_lambda = trace.lambda_history.last().copied().unwrap_or(trace.initial_lambda);

    Ok(TrialReport::GainsFigure(GainsTrial {
        sigma_max: target.sigma_max,
        depth: m,
        arbitrary: arbitrary_profile,
        widest: widest_profile,
        widest_coupling,
        arbitrary_gap_ratio: arbitrary_lambda / widest,
        walk_gap_ratio: final_lambda / widest,
        walk_converged: trace.converged,
        walk_accepted: trace.accept_count,
    }))
}

fn walk_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialReport, CliError> {
    let target = config.target.as_ref().expect("validated").resolve(seed)?;
    let dims = config.network.as_ref().expect("validated").dims_for(&target);
    let m = dims.len() - 1;
    let start = sample_arbitrary_minimum(&target, &dims, seed.wrapping_add(MINIMUM_SEED_OFFSET))?;
    let walk_cfg = config
        .walk
        .clone()
        .unwrap_or_default()
        .to_config(seed.wrapping_add(WALK_SEED_OFFSET));
    let trace = greedy_widest_walk(&start, &target, &walk_cfg)?;
    let widest = widest_sharpness(&target, m)?;
    let final_lambda = trace.lambda_history.last().copied().unwrap_or(trace.initial_lambda);
    Ok(TrialReport::Walk(WalkTrial {
        sigma_max: target.sigma_max,
        depth: m,
        trace,
        final_gap_ratio: final_lambda / widest,
    }))
}

fn train_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialReport, CliError> {
    let spec = config.train.clone().unwrap_or_default();
    let target = config.target.as_ref().expect("validated").resolve(seed)?;
    let dims = config.network.as_ref().expect("validated").dims_for(&target);
    let m = dims.len() - 1;
    let eta = match spec.eta {
        Some(eta) => eta,
        None => spec.eta_fraction * max_step_size(&target, m)?,
    };
    let moments = white_moments(&target);
    let start = identity_init(&dims).map_err(|e| {
        CliError::Config(format!("train experiment needs square dims (d_y = d_x = hidden): {e}"))
    })?;
    let cfg = TrainConfig {
        eta,
        max_iters: spec.max_iters,
        loss_tol: spec.loss_tol,
        mode: spec.mode,
        record_every: spec.record_every,
        seed,
    };
    let trace = train(&start, &moments, &cfg)?;

    // Distance to the balanced matrix-root solution, defined for PD targets.
    let layer_error = symmetric_pd_root(&target.t, m).map(|root| {
        trace
            .final_net
            .weights()
            .iter()
            .map(|w| (w - &root).norm())
            .fold(0.0f64, f64::max)
    });
    let widest = widest_sharpness(&target, m)?;
    let final_gap_ratio = trace.final_lambda_max.map(|l| l / widest);
    Ok(TrialReport::Train(TrainTrial {
        sigma_max: target.sigma_max,
        depth: m,
        eta,
        trace,
        layer_error,
        final_gap_ratio,
    }))
}

fn symmetric_pd_root(t: &nalgebra::DMatrix<f64>, m: usize) -> Option<nalgebra::DMatrix<f64>> {
    if !t.is_square() || (t - t.transpose()).norm() > 1e-12 * t.norm().max(1.0) {
        return None;
    }
    let eig = t.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let root_vals = eig.eigenvalues.map(|l| l.powf(1.0 / m as f64));
    Some(&eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&root_vals) * eig.eigenvectors.transpose())
}

fn scalar_interp_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialReport, CliError> {
    let spec = config.scalar_interp.clone().unwrap_or_default();
    let widest = scalar_widest(spec.tau, spec.m, spec.sigma_x2)?;
    let w1 = ScalarNetwork::new(vec![widest.magnitude; spec.m], spec.tau, spec.sigma_x2)?;

    // Random positive minimum: log-uniform layers, last one fixes the product.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(MINIMUM_SEED_OFFSET));
    let mut w: Vec<f64> = (0..spec.m).map(|_| (rng.gen_range(-1.2f64..1.2)).exp()).collect();
    let partial: f64 = w.iter().take(spec.m - 1).product();
    w[spec.m - 1] = spec.tau / partial;
    let sampled = ScalarNetwork::new(w, spec.tau, spec.sigma_x2)?;

    let (sampled_verdict, _, _) = interp_compare(&w1, &sampled)?;
    let section_sampled = scalar_section(&w1, &sampled, spec.n_points)?;

    // The deception applies when the sampled minimum honestly appears sharper.
    let (deceiver, deceiver_verdict, section_deceiver) =
        if sampled_verdict == InterpVerdict::W2AppearsSharper {
            let w3 = flatminima_core::deceive_construct(&w1, &sampled)?;
            let (v3, _, _) = interp_compare(&w1, &w3)?;
            let section = scalar_section(&w1, &w3, spec.n_points)?;
            (Some(w3), Some(v3), Some(section))
        } else {
            (None, None, None)
        };

    Ok(TrialReport::ScalarInterp(ScalarInterpTrial {
        tau: spec.tau,
        m: spec.m,
        widest: w1,
        sampled,
        sampled_verdict,
        deceiver,
        deceiver_verdict,
        section_sampled,
        section_deceiver,
    }))
}

fn escape_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialReport, CliError> {
    let spec = config.escape.clone().unwrap_or_default();
    let scalar = ScalarNetwork::new(vec![spec.start[0], spec.start[1]], spec.tau, spec.sigma_x2)?;
    let start_lambda = scalar_lambda_max(&scalar)?;
    let (net, moments) = scalar.embed();
    let trace = escape_experiment(&net, &moments, spec.eta, spec.perturbation, spec.iters, seed)?;
    let final_lambda = trace.final_lambda_max;
    let endpoint = scalars_of(&trace.final_net);
    debug_assert_eq!(endpoint.len(), 2);
    Ok(TrialReport::Escape(EscapeTrial {
        tau: spec.tau,
        eta: spec.eta,
        threshold: 2.0 / spec.eta,
        start_lambda,
        trace,
        final_lambda,
        contour: scalar_contour(spec.tau, spec.sigma_x2, spec.grid_box, spec.grid_n),
    }))
}
