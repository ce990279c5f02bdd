//! Experiment configuration: a single TOML file, strictly validated (unknown
//! fields rejected) before any computation starts.

use flatminima_core::io::MatrixRepr;
use flatminima_core::{moments_from_target, DataMoments, TargetMap};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Top Hessian eigenvalue at a canonical or sampled minimum.
    Sharpness,
    /// Per-depth gain profiles of arbitrary vs walk-converged minima.
    GainsFigure,
    /// Greedy random walk over the minima manifold.
    Walk,
    /// Identity-initialized GD (or gradient-flow) run.
    Train,
    /// Scalar minima interpolation and the deception construction.
    ScalarInterp,
    /// GD escape from a sharp scalar minimum.
    Escape,
}

/// Where the target map comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TargetSpec {
    pub kind: TargetKind,
    /// `[d_y, d_x]` for random targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 2]>,
    /// Explicit rows for `kind = "matrix"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// File path for `matrix-file` (MatrixRepr JSON) or `samples-csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Input column count for `samples-csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_cols: Option<usize>,
    /// Output column count for `samples-csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_cols: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Standard-normal entries, drawn per trial from the trial seed.
    Random,
    /// Explicit matrix in the config file.
    Matrix,
    /// MatrixRepr JSON document on disk.
    MatrixFile,
    /// Paired samples CSV; the target is the optimal map of their moments.
    SamplesCsv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Number of layers m.
    pub depth: usize,
    /// Interior dimension; defaults to max(d_x, d_y).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SharpnessSpec {
    #[serde(default = "default_method")]
    pub method: flatminima_core::EigMethod,
    #[serde(default = "default_net_choice")]
    pub net: NetChoice,
}

fn default_method() -> flatminima_core::EigMethod {
    flatminima_core::EigMethod::DenseReduced
}

fn default_net_choice() -> NetChoice {
    NetChoice::Canonical
}

impl Default for SharpnessSpec {
    fn default() -> Self {
        Self { method: default_method(), net: default_net_choice() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetChoice {
    Canonical,
    Arbitrary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    #[serde(default = "d_eps0")]
    pub eps0: f64,
    #[serde(default = "d_shrink")]
    pub shrink: f64,
    #[serde(default = "d_patience")]
    pub patience: u32,
    #[serde(default = "d_walk_iters")]
    pub max_iters: u64,
    #[serde(default = "d_stop_ratio")]
    pub stop_ratio: f64,
    #[serde(default = "d_eps_min")]
    pub eps_min: f64,
}

fn d_eps0() -> f64 {
    1e-2
}
fn d_shrink() -> f64 {
    0.5
}
fn d_patience() -> u32 {
    25
}
fn d_walk_iters() -> u64 {
    200_000
}
fn d_stop_ratio() -> f64 {
    1.01
}
fn d_eps_min() -> f64 {
    1e-4
}

impl Default for WalkSpec {
    fn default() -> Self {
        Self {
            eps0: d_eps0(),
            shrink: d_shrink(),
            patience: d_patience(),
            max_iters: d_walk_iters(),
            stop_ratio: d_stop_ratio(),
            eps_min: d_eps_min(),
        }
    }
}

impl WalkSpec {
    pub fn to_config(&self, seed: u64) -> flatminima_core::WalkConfig {
        flatminima_core::WalkConfig {
            eps0: self.eps0,
            shrink: self.shrink,
            patience: self.patience,
            max_iters: self.max_iters,
            stop_ratio: self.stop_ratio,
            eps_min: self.eps_min,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    /// Step size; omit to use the convergence bound of the drawn target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Multiplier applied when `eta` is derived from the bound.
    #[serde(default = "d_eta_fraction")]
    pub eta_fraction: f64,
    #[serde(default = "d_train_iters")]
    pub max_iters: u64,
    #[serde(default = "d_loss_tol")]
    pub loss_tol: f64,
    #[serde(default = "d_mode")]
    pub mode: flatminima_core::TrainMode,
    #[serde(default = "d_record_every")]
    pub record_every: u64,
}

fn d_eta_fraction() -> f64 {
    0.95
}
fn d_train_iters() -> u64 {
    200_000
}
fn d_loss_tol() -> f64 {
    1e-12
}
fn d_mode() -> flatminima_core::TrainMode {
    flatminima_core::TrainMode::Gd
}
fn d_record_every() -> u64 {
    100
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            eta: None,
            eta_fraction: d_eta_fraction(),
            max_iters: d_train_iters(),
            loss_tol: d_loss_tol(),
            mode: d_mode(),
            record_every: d_record_every(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarInterpSpec {
    /// Depth of the scalar networks.
    #[serde(default = "d_scalar_m")]
    pub m: usize,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_sigma_x2")]
    pub sigma_x2: f64,
    /// Points per emitted loss section.
    #[serde(default = "d_n_points")]
    pub n_points: usize,
}

fn d_scalar_m() -> usize {
    3
}
fn d_tau() -> f64 {
    8.0
}
fn d_sigma_x2() -> f64 {
    1.0
}
fn d_n_points() -> usize {
    121
}

impl Default for ScalarInterpSpec {
    fn default() -> Self {
        Self { m: d_scalar_m(), tau: d_tau(), sigma_x2: d_sigma_x2(), n_points: d_n_points() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscapeSpec {
    /// Scalar two-layer start point (a minimum of `tau`).
    #[serde(default = "d_start")]
    pub start: [f64; 2],
    #[serde(default = "d_escape_tau")]
    pub tau: f64,
    #[serde(default = "d_sigma_x2")]
    pub sigma_x2: f64,
    #[serde(default = "d_escape_eta")]
    pub eta: f64,
    #[serde(default = "d_perturbation")]
    pub perturbation: f64,
    #[serde(default = "d_escape_iters")]
    pub iters: u64,
    /// Contour-grid box `[w1_min, w1_max, w2_min, w2_max]` for emission.
    #[serde(default = "d_box")]
    pub grid_box: [f64; 4],
    #[serde(default = "d_grid_n")]
    pub grid_n: usize,
}

fn d_start() -> [f64; 2] {
    [4.0, 0.5]
}
fn d_escape_tau() -> f64 {
    2.0
}
fn d_escape_eta() -> f64 {
    0.1
}
fn d_perturbation() -> f64 {
    1e-3
}
fn d_escape_iters() -> u64 {
    100_000
}
fn d_box() -> [f64; 4] {
    [-0.5, 4.5, -0.5, 4.5]
}
fn d_grid_n() -> usize {
    61
}

impl Default for EscapeSpec {
    fn default() -> Self {
        Self {
            start: d_start(),
            tau: d_escape_tau(),
            sigma_x2: d_sigma_x2(),
            eta: d_escape_eta(),
            perturbation: d_perturbation(),
            iters: d_escape_iters(),
            grid_box: d_box(),
            grid_n: d_grid_n(),
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub target: Option<TargetSpec>,
    pub network: Option<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<SharpnessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar_interp: Option<ScalarInterpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape: Option<EscapeSpec>,
}

fn d_trials() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        let needs_target = !matches!(self.experiment, ExperimentKind::ScalarInterp | ExperimentKind::Escape);
        if needs_target {
            let target = self
                .target
                .as_ref()
                .ok_or_else(|| CliError::Config("this experiment requires a [target] section".into()))?;
            target.validate()?;
            let network = self
                .network
                .as_ref()
                .ok_or_else(|| CliError::Config("this experiment requires a [network] section".into()))?;
            if network.depth == 0 {
                return Err(CliError::Config("network.depth must be at least 1".into()));
            }
        }
        if let Some(walk) = &self.walk {
            walk.to_config(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(train) = &self.train {
            if train.eta.is_some_and(|e| e <= 0.0) || train.eta_fraction <= 0.0 {
                return Err(CliError::Config("train.eta and eta_fraction must be positive".into()));
            }
        }
        if let Some(scalar) = &self.scalar_interp {
            if scalar.m == 0 || scalar.tau <= 0.0 || scalar.n_points < 2 {
                return Err(CliError::Config(
                    "scalar_interp needs m >= 1, tau > 0, n_points >= 2".into(),
                ));
            }
        }
        if let Some(escape) = &self.escape {
            if escape.eta <= 0.0 || escape.grid_n < 2 {
                return Err(CliError::Config("escape needs eta > 0 and grid_n >= 2".into()));
            }
            if (escape.start[0] * escape.start[1] - escape.tau).abs() > 1e-9 * escape.tau.abs().max(1.0) {
                return Err(CliError::Config("escape.start must satisfy w1*w2 = tau".into()));
            }
        }
        Ok(())
    }
}

impl TargetSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        match self.kind {
            TargetKind::Random => {
                let dims = self.dims.ok_or_else(|| CliError::Config("random target needs dims".into()))?;
                if dims[0] == 0 || dims[1] == 0 {
                    return Err(CliError::Config("target dims must be positive".into()));
                }
            }
            TargetKind::Matrix => {
                let rows = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| CliError::Config("matrix target needs the matrix field".into()))?;
                if rows.is_empty() || rows[0].is_empty() {
                    return Err(CliError::Config("matrix target must be non-empty".into()));
                }
                if rows.iter().any(|r| r.len() != rows[0].len()) {
                    return Err(CliError::Config("matrix target rows must have equal length".into()));
                }
            }
            TargetKind::MatrixFile => {
                if self.path.is_none() {
                    return Err(CliError::Config("matrix-file target needs a path".into()));
                }
            }
            TargetKind::SamplesCsv => {
                if self.path.is_none() || self.x_cols.is_none() || self.y_cols.is_none() {
                    return Err(CliError::Config("samples-csv target needs path, x_cols, y_cols".into()));
                }
            }
        }
        Ok(())
    }

    /// Resolve the target map for one trial. Random targets are drawn from
    /// `trial_seed`; file and explicit targets are the same for every trial.
    pub fn resolve(&self, trial_seed: u64) -> Result<TargetMap, CliError> {
        match self.kind {
            TargetKind::Random => {
                let [d_y, d_x] = self.dims.expect("validated");
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(trial_seed);
                let t = flatminima_core::linalg::standard_normal_matrix(&mut rng, d_y, d_x);
                Ok(TargetMap::from_matrix(t))
            }
            TargetKind::Matrix => {
                let rows = self.matrix.as_ref().expect("validated");
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(TargetMap::from_matrix(DMatrix::from_row_slice(rows.len(), rows[0].len(), &flat)))
            }
            TargetKind::MatrixFile => {
                let path = self.path.as_ref().expect("validated");
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                let repr: MatrixRepr =
                    serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(TargetMap::from_matrix(repr.to_matrix().map_err(CliError::from)?))
            }
            TargetKind::SamplesCsv => {
                let path = self.path.as_ref().expect("validated");
                let moments = flatminima_core::io::moments_from_csv(
                    path,
                    self.x_cols.expect("validated"),
                    self.y_cols.expect("validated"),
                )?;
                Ok(TargetMap::from_moments(&moments)?)
            }
        }
    }
}

impl NetworkSpec {
    /// Dimension chain `d_x, hidden…, d_y` for a resolved target.
    pub fn dims_for(&self, target: &TargetMap) -> Vec<usize> {
        let hidden = self.hidden.unwrap_or_else(|| target.d_x().max(target.d_y()));
        let mut dims = Vec::with_capacity(self.depth + 1);
        dims.push(target.d_x());
        for _ in 1..self.depth {
            dims.push(hidden);
        }
        dims.push(target.d_y());
        dims
    }
}

/// White noiseless moments for a resolved target; the setting in which the
/// sharpness laws are exact.
pub fn white_moments(target: &TargetMap) -> DataMoments {
    moments_from_target(&target.t).0
}
