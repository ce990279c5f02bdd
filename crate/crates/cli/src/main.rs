//! `flatminima` command line: run seeded experiment batches and emit plot
//! data from saved bundles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flatminima_cli::bundle::TrialReport;
use flatminima_cli::{emit, runner, CliError, EmitKind, ExperimentConfig};

#[derive(Parser)]
#[command(name = "flatminima", version, about = "Experiments on the widest minima of deep linear networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config and save the bundle.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Concurrent trials.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Exit with code 3 if any trial fails numerically.
        #[arg(long)]
        strict: bool,
        /// Output directory (overrides the config's `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit plot CSVs from a saved bundle.
    Emit {
        /// Path to a bundle JSON written by `run`.
        bundle: PathBuf,
        /// Which file set to produce.
        #[arg(long)]
        kind: EmitKind,
        /// Output directory (defaults to the bundle's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<ExitCode, CliError> {
    match Cli::parse().command {
        Command::Run { config, jobs, strict, out } => {
            if jobs == 0 {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            let parsed = ExperimentConfig::from_path(&config)?;
            let bundle = runner::run(&parsed, jobs)?;
            let out_dir = out
                .or_else(|| parsed.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out_dir)?;
            let bundle_path = out_dir.join("bundle.json");
            emit::write_bundle(&bundle, &bundle_path)?;

            for trial in &bundle.trials {
                match (&trial.status[..], &trial.error) {
                    ("ok", _) => summarize_trial(trial.trial, trial.seed, trial.report.as_ref()),
                    (_, Some(err)) => println!("trial {:>3} seed {:>6}  FAILED: {err}", trial.trial, trial.seed),
                    _ => {}
                }
            }
            let s = &bundle.summary;
            println!(
                "{} ok, {} failed; gap ratio min/median/max = {}",
                s.trials_ok,
                s.trials_failed,
                match (s.gap_ratio_min, s.gap_ratio_median, s.gap_ratio_max) {
                    (Some(lo), Some(med), Some(hi)) => format!("{lo:.6} / {med:.6} / {hi:.6}"),
                    _ => "n/a".into(),
                }
            );
            println!("bundle written to {}", bundle_path.display());
            if strict && s.trials_failed > 0 {
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Emit { bundle, kind, out } => {
            let parsed = emit::read_bundle(&bundle)?;
            let out_dir = out.unwrap_or_else(|| {
                bundle.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
            });
            let written = emit::emit_plot_data(&parsed, kind, &out_dir)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn summarize_trial(index: usize, seed: u64, report: Option<&TrialReport>) {
    let Some(report) = report else { return };
    let line = match report {
        TrialReport::Sharpness(t) => format!(
            "lambda_max = {:.6}, widest = {:.6}, gap ratio = {:.6}",
            t.report.lambda_max, t.report.widest_value, t.report.gap_ratio
        ),
        TrialReport::GainsFigure(t) => format!(
            "arbitrary ratio = {:.3}, walk ratio = {:.6} (accepted {} steps, converged = {})",
            t.arbitrary_gap_ratio, t.walk_gap_ratio, t.walk_accepted, t.walk_converged
        ),
        TrialReport::Walk(t) => format!(
            "lambda {:.4} -> {:.4} (ratio {:.6}, {} accepts / {} rejects, converged = {})",
            t.trace.initial_lambda,
            t.trace.lambda_history.last().copied().unwrap_or(t.trace.initial_lambda),
            t.final_gap_ratio,
            t.trace.accept_count,
            t.trace.reject_count,
            t.trace.converged
        ),
        TrialReport::Train(t) => format!(
            "eta = {:.6}, converged = {}, final loss = {:.3e}{}",
            t.eta,
            t.trace.converged,
            t.trace.final_loss,
            match t.layer_error {
                Some(err) => format!(", layer error = {err:.3e}"),
                None => String::new(),
            }
        ),
        TrialReport::ScalarInterp(t) => format!(
            "sampled verdict = {:?}{}",
            t.sampled_verdict,
            match &t.deceiver_verdict {
                Some(v) => format!(", deceiver verdict = {v:?}"),
                None => String::new(),
            }
        ),
        TrialReport::Escape(t) => format!(
            "start lambda = {:.3} vs threshold {:.3}; final lambda = {}",
            t.start_lambda,
            t.threshold,
            match t.final_lambda {
                Some(l) => format!("{l:.4}"),
                None => "not at a minimum".into(),
            }
        ),
    };
    println!("trial {index:>3} seed {seed:>6}  {line}");
}
