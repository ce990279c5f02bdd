//! Plot-data emission: stable CSV schemas derived from a saved bundle.
//! All floats are written with 17 significant digits so files are bit-stable
//! across runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flatminima_core::{GainProfile, TrainTrace, WalkTrace};
use serde::{Deserialize, Serialize};

use crate::bundle::{ReportBundle, TrialReport};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum EmitKind {
    /// Per-depth singular values, v/u gains, and the bound (`gains_*.csv`).
    Gains,
    /// Accepted-step λ and ε of a walk (`walk_lambda_*.csv`).
    LambdaTrajectory,
    /// Loss along minima-connecting segments (`section_*.csv`).
    LossSections,
    /// Loss/balance history of a training run (`train_trace_*.csv`).
    TrainTrace,
    /// 2-D parameter path and loss contour grid of scalar runs (`gd_path_*`, `contour_*`).
    GdPath,
}

fn fmt_f(value: f64) -> String {
    format!("{value:.17e}")
}

/// Atomic write: temp file in the destination directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn gains_csv(profile: &GainProfile) -> String {
    let n_sing = profile.per_depth_singulars.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::from("k,bound,v_gain,u_gain");
    for i in 1..=n_sing {
        let _ = write!(out, ",sigma_{i}");
    }
    out.push('\n');
    for k in 0..=profile.depth {
        let _ = write!(
            out,
            "{k},{},{},{}",
            fmt_f(profile.bound[k]),
            fmt_f(profile.v_gain[k]),
            fmt_f(profile.u_gain[k])
        );
        for i in 0..n_sing {
            match profile.per_depth_singulars[k].get(i) {
                Some(&s) => {
                    let _ = write!(out, ",{}", fmt_f(s));
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn walk_csv(trace: &WalkTrace) -> String {
    let mut out = String::from("step,lambda,eps\n");
    for (i, (lambda, eps)) in trace.lambda_history.iter().zip(&trace.eps_history).enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, fmt_f(*lambda), fmt_f(*eps));
    }
    out
}

fn section_csv(section: &[(f64, f64)]) -> String {
    let mut out = String::from("alpha,loss\n");
    for (alpha, loss) in section {
        let _ = writeln!(out, "{},{}", fmt_f(*alpha), fmt_f(*loss));
    }
    out
}

fn train_csv(trace: &TrainTrace) -> String {
    let mut out = String::from("iteration,loss,balance_residual\n");
    for ((it, loss), balance) in
        trace.iterations.iter().zip(&trace.loss_history).zip(&trace.balance_residuals)
    {
        let _ = writeln!(out, "{},{},{}", it, fmt_f(*loss), fmt_f(*balance));
    }
    out
}

fn path_csv(trace: &TrainTrace) -> Option<String> {
    let path = trace.scalar_path.as_ref()?;
    let mut out = String::from("iteration,w1,w2\n");
    for (it, [w1, w2]) in trace.iterations.iter().zip(path) {
        let _ = writeln!(out, "{},{},{}", it, fmt_f(*w1), fmt_f(*w2));
    }
    Some(out)
}

fn contour_csv(contour: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("w1,w2,loss\n");
    for (w1, w2, loss) in contour {
        let _ = writeln!(out, "{},{},{}", fmt_f(*w1), fmt_f(*w2), fmt_f(*loss));
    }
    out
}

/// Write the CSV files of `kind` for every trial of the bundle that carries
/// the required report. Returns the written paths; errors when no trial can
/// serve the request.
pub fn emit_plot_data(bundle: &ReportBundle, kind: EmitKind, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let mut emit = |name: String, contents: String| -> Result<(), CliError> {
        let path = out_dir.join(name);
        write_atomic(&path, &contents)?;
        written.push(path);
        Ok(())
    };

    for outcome in &bundle.trials {
        let Some(report) = outcome.report.as_ref() else { continue };
        let t = outcome.trial;
        match (kind, report) {
            (EmitKind::Gains, TrialReport::GainsFigure(g)) => {
                emit(format!("gains_arbitrary_t{t}.csv"), gains_csv(&g.arbitrary))?;
                emit(format!("gains_widest_t{t}.csv"), gains_csv(&g.widest))?;
            }
            (EmitKind::LambdaTrajectory, TrialReport::Walk(w)) => {
                emit(format!("walk_lambda_t{t}.csv"), walk_csv(&w.trace))?;
            }
            (EmitKind::LossSections, TrialReport::ScalarInterp(s)) => {
                emit(format!("section_sampled_t{t}.csv"), section_csv(&s.section_sampled))?;
                if let Some(section) = &s.section_deceiver {
                    emit(format!("section_deceiver_t{t}.csv"), section_csv(section))?;
                }
            }
            (EmitKind::TrainTrace, TrialReport::Train(tr)) => {
                emit(format!("train_trace_t{t}.csv"), train_csv(&tr.trace))?;
            }
            (EmitKind::TrainTrace, TrialReport::Escape(e)) => {
                emit(format!("train_trace_t{t}.csv"), train_csv(&e.trace))?;
            }
            (EmitKind::GdPath, TrialReport::Escape(e)) => {
                if let Some(path) = path_csv(&e.trace) {
                    emit(format!("gd_path_t{t}.csv"), path)?;
                }
                emit(format!("contour_t{t}.csv"), contour_csv(&e.contour))?;
            }
            (EmitKind::GdPath, TrialReport::Train(tr)) => {
                if let Some(path) = path_csv(&tr.trace) {
                    emit(format!("gd_path_t{t}.csv"), path)?;
                }
            }
            _ => {}
        }
    }
    if written.is_empty() {
        return Err(CliError::MissingReports(format!(
            "bundle has no trial reports usable for {kind:?}"
        )));
    }
    Ok(written)
}

/// Save a bundle as pretty JSON (atomic).
pub fn write_bundle(bundle: &ReportBundle, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(bundle).map_err(flatminima_core::Error::from)?;
    write_atomic(path, &json)
}

/// Load a bundle back.
pub fn read_bundle(path: &Path) -> Result<ReportBundle, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text).map_err(flatminima_core::Error::from)?)
}
