//! The serialized result of an experiment batch: config echo, per-trial
//! reports, and summary statistics, all under the versioned schema tag.

use flatminima_core::{
    CouplingReport, GainProfile, InterpVerdict, LinearNetwork, ScalarNetwork, SharpnessReport,
    TrainTrace, WalkTrace,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    /// Schema tag, `"flatminima/1"`.
    pub format: String,
    /// Wall-clock stamp; excluded from determinism comparisons.
    pub created_unix_ms: u64,
    /// Effective base seed (after any environment override).
    pub base_seed: u64,
    /// The validated configuration that produced this bundle.
    pub config: ExperimentConfig,
    pub trials: Vec<TrialOutcome>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// `"ok"` or `"error"`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<TrialReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrialReport {
    Sharpness(SharpnessTrial),
    GainsFigure(GainsTrial),
    Walk(WalkTrial),
    Train(TrainTrial),
    ScalarInterp(ScalarInterpTrial),
    Escape(EscapeTrial),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharpnessTrial {
    pub sigma_max: f64,
    pub depth: usize,
    pub report: SharpnessReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainsTrial {
    pub sigma_max: f64,
    pub depth: usize,
    /// Profile of the sampled arbitrary minimum.
    pub arbitrary: GainProfile,
    /// Profile of the walk-converged minimum.
    pub widest: GainProfile,
    pub widest_coupling: CouplingReport,
    /// λ ratios before/after the walk.
    pub arbitrary_gap_ratio: f64,
    pub walk_gap_ratio: f64,
    pub walk_converged: bool,
    pub walk_accepted: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkTrial {
    pub sigma_max: f64,
    pub depth: usize,
    pub trace: WalkTrace,
    pub final_gap_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrial {
    pub sigma_max: f64,
    pub depth: usize,
    pub eta: f64,
    pub trace: TrainTrace,
    /// `max_i ‖W_i − T^{1/m}‖_F` against the balanced matrix-root solution,
    /// when the target is positive definite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gap_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarInterpTrial {
    pub tau: f64,
    pub m: usize,
    pub widest: ScalarNetwork,
    pub sampled: ScalarNetwork,
    pub sampled_verdict: InterpVerdict,
    /// Deceiving minimum, present when the sampled one appears sharper.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deceiver: Option<ScalarNetwork>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deceiver_verdict: Option<InterpVerdict>,
    /// Loss along the widest-to-sampled segment.
    pub section_sampled: Vec<(f64, f64)>,
    /// Loss along the widest-to-deceiver segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_deceiver: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeTrial {
    pub tau: f64,
    pub eta: f64,
    /// `2/η`, the stability threshold.
    pub threshold: f64,
    pub start_lambda: f64,
    pub trace: TrainTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_lambda: Option<f64>,
    /// Loss over the configured grid box, row-major `(w1, w2, loss)` triples.
    pub contour: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Summary {
    pub trials_ok: usize,
    pub trials_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_ratio_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_ratio_median: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_ratio_max: Option<f64>,
}

impl TrialReport {
    /// The λ gap ratio this trial contributes to the summary, if any.
    pub fn gap_ratio(&self) -> Option<f64> {
        match self {
            TrialReport::Sharpness(t) => Some(t.report.gap_ratio),
            TrialReport::GainsFigure(t) => Some(t.walk_gap_ratio),
            TrialReport::Walk(t) => Some(t.final_gap_ratio),
            TrialReport::Train(t) => t.final_gap_ratio,
            TrialReport::ScalarInterp(_) => None,
            TrialReport::Escape(t) => {
                let widest = 2.0 * 2.0 * t.tau.abs();
                t.final_lambda.map(|l| l / widest)
            }
        }
    }
}

impl Summary {
    pub fn from_trials(trials: &[TrialOutcome]) -> Self {
        let mut ratios: Vec<f64> = trials
            .iter()
            .filter_map(|t| t.report.as_ref().and_then(TrialReport::gap_ratio))
            .filter(|r| r.is_finite())
            .collect();
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if ratios.is_empty() {
            None
        } else if ratios.len() % 2 == 1 {
            Some(ratios[ratios.len() / 2])
        } else {
            Some(0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2]))
        };
        Self {
            trials_ok: trials.iter().filter(|t| t.status == "ok").count(),
            trials_failed: trials.iter().filter(|t| t.status != "ok").count(),
            gap_ratio_min: ratios.first().copied(),
            gap_ratio_median: median,
            gap_ratio_max: ratios.last().copied(),
        }
    }
}

/// Helper for the scalar experiments: embed two scalar nets and evaluate the
/// loss along their connecting segment.
pub fn scalar_section(
    a: &ScalarNetwork,
    b: &ScalarNetwork,
    n_points: usize,
) -> flatminima_core::Result<Vec<(f64, f64)>> {
    let (net_a, moments) = a.embed();
    let (net_b, _) = b.embed();
    flatminima_core::loss_section(&net_a, &net_b, &moments, n_points)
}

/// Scalar two-layer loss over a grid box, for contour plots.
pub fn scalar_contour(
    tau: f64,
    sigma_x2: f64,
    grid_box: [f64; 4],
    grid_n: usize,
) -> Vec<(f64, f64, f64)> {
    let [w1_lo, w1_hi, w2_lo, w2_hi] = grid_box;
    let mut out = Vec::with_capacity(grid_n * grid_n);
    for i in 0..grid_n {
        let w1 = w1_lo + (w1_hi - w1_lo) * i as f64 / (grid_n - 1) as f64;
        for j in 0..grid_n {
            let w2 = w2_lo + (w2_hi - w2_lo) * j as f64 / (grid_n - 1) as f64;
            // E(y - w2 w1 x)^2 with y = tau x: sigma_x2 (tau - w2 w1)^2.
            let l = sigma_x2 * (tau - w2 * w1) * (tau - w2 * w1);
            out.push((w1, w2, l));
        }
    }
    out
}

/// The `LinearNetwork` embedded by [`ScalarNetwork::embed`] back as scalars.
pub fn scalars_of(net: &LinearNetwork) -> Vec<f64> {
    net.weights().iter().map(|w| w[(0, 0)]).collect()
}
