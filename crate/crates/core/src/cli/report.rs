//! CSV and JSON emission of experiment outcomes.
//!
//! CSV uses CRLF record terminators and `.` as decimal separator. JSON
//! reports carry a `provenance` block with the resolved config; running that
//! config again reproduces the report exactly.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use super::config::{fmt_f64, RunConfig};
use crate::experiments::{ConvergenceReport, MomentReport, NegativityStats, PriceEstimate};
use crate::model::AssumptionAReport;
use crate::schemes::PathResult;

pub const CONVERGENCE_HEADER: &str = "level,dt,mse,rmse,ci95";
pub const SIMULATE_HEADER: &str = "path,step,time,value,z_negative";
pub const METRIC_HEADER: &str = "metric,value,se";

pub const VERSION: &str = concat!("cevlab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Check { dt: f64, report: AssumptionAReport },
    Simulate(Vec<PathResult>),
    Convergence(ConvergenceReport),
    Moments(MomentReport),
    Negativity(NegativityStats),
    Price(PriceEstimate),
}

/// Number formatting for CSV cells: plain decimal in the usual range,
/// exponent form for very small or large magnitudes; always round-trips.
fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e16) {
        format!("{x:e}")
    } else {
        fmt_f64(x)
    }
}

fn jnum(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(num(x)))
}

fn metric_rows(rows: &[(&str, String, Option<f64>)]) -> String {
    let mut out = format!("{METRIC_HEADER}\r\n");
    for (name, value, se) in rows {
        let se = se.map(num).unwrap_or_default();
        let _ = write!(out, "{name},{value},{se}\r\n");
    }
    out
}

impl Outcome {
    pub fn summary(&self) -> String {
        match self {
            Outcome::Check { report, .. } => format!(
                "feasible={} max_step={} margin={}",
                report.feasible,
                num(report.max_step),
                num(report.margin)
            ),
            Outcome::Simulate(paths) => {
                let flips: u64 = paths.iter().map(|p| p.sign_flip_count).sum();
                let min = paths
                    .iter()
                    .map(|p| p.min_value)
                    .fold(f64::INFINITY, f64::min);
                format!(
                    "paths={} sign_flips={flips} min_value={}",
                    paths.len(),
                    num(min)
                )
            }
            Outcome::Convergence(r) => match &r.fit {
                Some(fit) => format!(
                    "fitted_order={:.4} r2={:.4} theoretical_order={} levels={}",
                    fit.slope,
                    fit.r2,
                    num(r.theoretical_order),
                    r.levels.len()
                ),
                None => format!("fitted_order=undefined levels={}", r.levels.len()),
            },
            Outcome::Moments(m) => format!(
                "mean={} se={} analytic_mean={} second_moment={}",
                num(m.sample_mean),
                num(m.se_mean),
                num(m.analytic_mean),
                num(m.sample_second_moment)
            ),
            Outcome::Negativity(s) => format!(
                "steps={} sign_flips={} clamps={} max_step_prob={}",
                s.total_steps,
                s.sign_flip_events,
                s.clamp_events,
                num(s.max_step_prob)
            ),
            Outcome::Price(p) => format!(
                "price={} ci95={} paths={}",
                num(p.price),
                num(p.ci_halfwidth),
                p.n_paths
            ),
        }
    }

    pub fn to_csv(&self) -> String {
        match self {
            Outcome::Check { dt, report } => metric_rows(&[
                ("feasible", u8::from(report.feasible).to_string(), None),
                (
                    "drift_condition_ok",
                    u8::from(report.drift_condition_ok).to_string(),
                    None,
                ),
                (
                    "step_condition_ok",
                    u8::from(report.step_condition_ok).to_string(),
                    None,
                ),
                ("dt", num(*dt), None),
                ("max_step", num(report.max_step), None),
                ("margin", num(report.margin), None),
            ]),
            Outcome::Simulate(paths) => {
                let mut out = format!("{SIMULATE_HEADER}\r\n");
                for (i, path) in paths.iter().enumerate() {
                    for (step, (t, v)) in path.times.iter().zip(&path.values).enumerate() {
                        let flag = step.checked_sub(1).is_some_and(|k| path.z_negative[k]);
                        let _ = write!(
                            out,
                            "{i},{step},{},{},{}\r\n",
                            num(*t),
                            num(*v),
                            u8::from(flag)
                        );
                    }
                }
                out
            }
            Outcome::Convergence(r) => {
                let mut out = format!("{CONVERGENCE_HEADER}\r\n");
                for l in &r.levels {
                    let _ = write!(
                        out,
                        "{},{},{},{},{}\r\n",
                        l.exponent,
                        num(l.dt),
                        num(l.mse),
                        num(l.rmse),
                        num(l.ci_halfwidth)
                    );
                }
                out
            }
            Outcome::Moments(m) => metric_rows(&[
                ("sample_mean", num(m.sample_mean), Some(m.se_mean)),
                (
                    "sample_second_moment",
                    num(m.sample_second_moment),
                    Some(m.se_second),
                ),
                ("analytic_mean", num(m.analytic_mean), None),
                ("abs_mean_error", num(m.abs_mean_error), None),
                ("n_paths", m.n_paths.to_string(), None),
            ]),
            Outcome::Negativity(s) => metric_rows(&[
                ("total_steps", s.total_steps.to_string(), None),
                ("sign_flip_events", s.sign_flip_events.to_string(), None),
                ("clamp_events", s.clamp_events.to_string(), None),
                ("max_step_prob", num(s.max_step_prob), None),
                ("expected_events", num(s.expected_events), None),
            ]),
            Outcome::Price(p) => metric_rows(&[
                ("price", num(p.price), Some(p.se)),
                ("ci95", num(p.ci_halfwidth), None),
                ("negative_terminals", p.negative_terminals.to_string(), None),
                ("n_paths", p.n_paths.to_string(), None),
            ]),
        }
    }

    fn report_json(&self) -> Value {
        match self {
            Outcome::Check { dt, report } => json!({
                "dt": jnum(*dt),
                "feasible": report.feasible,
                "drift_condition_ok": report.drift_condition_ok,
                "step_condition_ok": report.step_condition_ok,
                "max_step": jnum(report.max_step),
                "margin": jnum(report.margin),
            }),
            Outcome::Simulate(paths) => Value::Array(
                paths
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        json!({
                            "path": i,
                            "times": p.times.iter().copied().map(jnum).collect::<Vec<_>>(),
                            "values": p.values.iter().copied().map(jnum).collect::<Vec<_>>(),
                            "z_negative": p.z_negative,
                            "sign_flip_count": p.sign_flip_count,
                            "clamp_count": p.clamp_count,
                            "min_value": jnum(p.min_value),
                        })
                    })
                    .collect(),
            ),
            Outcome::Convergence(r) => json!({
                "scheme": r.scheme.name(),
                "t_end": jnum(r.t_end),
                "ref_exponent": r.ref_exponent,
                "n_paths": r.n_paths,
                "levels": r.levels.iter().map(|l| json!({
                    "level": l.exponent,
                    "dt": jnum(l.dt),
                    "mse": jnum(l.mse),
                    "rmse": jnum(l.rmse),
                    "ci95": jnum(l.ci_halfwidth),
                })).collect::<Vec<_>>(),
                "fitted_order": r.fit.map(|f| jnum(f.slope)),
                "fit_intercept": r.fit.map(|f| jnum(f.intercept)),
                "fit_r2": r.fit.map(|f| jnum(f.r2)),
                "theoretical_order": jnum(r.theoretical_order),
            }),
            Outcome::Moments(m) => json!({
                "n_paths": m.n_paths,
                "t_end": jnum(m.t_end),
                "sample_mean": jnum(m.sample_mean),
                "se_mean": jnum(m.se_mean),
                "sample_second_moment": jnum(m.sample_second_moment),
                "se_second": jnum(m.se_second),
                "analytic_mean": jnum(m.analytic_mean),
                "abs_mean_error": jnum(m.abs_mean_error),
            }),
            Outcome::Negativity(s) => json!({
                "n_paths": s.n_paths,
                "total_steps": s.total_steps,
                "sign_flip_events": s.sign_flip_events,
                "clamp_events": s.clamp_events,
                "max_step_prob": jnum(s.max_step_prob),
                "expected_events": jnum(s.expected_events),
            }),
            Outcome::Price(p) => json!({
                "price": jnum(p.price),
                "se": jnum(p.se),
                "ci95": jnum(p.ci_halfwidth),
                "n_paths": p.n_paths,
                "negative_terminals": p.negative_terminals,
            }),
        }
    }

    pub fn to_json(&self, config: &RunConfig) -> String {
        let resolved: Map<String, Value> = config
            .resolved_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v)))
            .collect();
        let doc = json!({
            "experiment": config.experiment.name(),
            "provenance": {
                "version": VERSION,
                "master_seed": config.seed,
                "config": resolved,
            },
            "report": self.report_json(),
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        text
    }
}
