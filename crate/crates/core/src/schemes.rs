//! One-step maps and path simulation.
//!
//! The semi-discrete step is
//!
//! ```text
//! y_{k+1} = | σ(1-a)ΔW_k + inner(y_k)^{1-a} |^{1/(1-a)}
//! ```
//!
//! which is nonnegative by construction. The Euler variants are baselines
//! that show what goes wrong without it.

use std::fmt;
use std::str::FromStr;

use crate::brownian::IncrementArray;
use crate::model::{inner_value, pow_nonneg, validate_assumption_a, CevParams, TimeGrid};
use crate::{CevError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeId {
    SemiDiscrete,
    EulerNaive,
    EulerFullTruncation,
    EulerReflected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EulerVariant {
    Naive,
    FullTruncation,
    Reflected,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::SemiDiscrete,
        SchemeId::EulerNaive,
        SchemeId::EulerFullTruncation,
        SchemeId::EulerReflected,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeId::SemiDiscrete => "semidiscrete",
            SchemeId::EulerNaive => "euler-naive",
            SchemeId::EulerFullTruncation => "euler-full-truncation",
            SchemeId::EulerReflected => "euler-reflected",
        }
    }

    pub fn euler_variant(&self) -> Option<EulerVariant> {
        match self {
            SchemeId::SemiDiscrete => None,
            SchemeId::EulerNaive => Some(EulerVariant::Naive),
            SchemeId::EulerFullTruncation => Some(EulerVariant::FullTruncation),
            SchemeId::EulerReflected => Some(EulerVariant::Reflected),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "semidiscrete" | "semi-discrete" => Ok(SchemeId::SemiDiscrete),
            "euler-naive" | "euler" => Ok(SchemeId::EulerNaive),
            "euler-full-truncation" | "euler-ft" => Ok(SchemeId::EulerFullTruncation),
            "euler-reflected" | "euler-reflection" => Ok(SchemeId::EulerReflected),
            _ => Err(format!(
                "unknown scheme '{s}' (expected one of semidiscrete, euler-naive, \
                 euler-full-truncation, euler-reflected)"
            )),
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    /// Semi-discrete: `z < 0` before the absolute value. Euler: the
    /// unreflected/untruncated update went negative.
    pub z_negative: bool,
    /// The inner expression was clamped from a rounding-level negative.
    pub clamped: bool,
}

/// One step of the semi-discrete scheme from `y ≥ 0`.
pub fn semidiscrete_step(y: f64, dt: f64, dw: f64, params: &CevParams) -> Result<(f64, StepFlags)> {
    let inner = inner_value(y, dt, params)?;
    let one_minus_a = 1.0 - params.a();
    let z = params.sigma() * one_minus_a * dw + pow_nonneg(inner.value, one_minus_a);
    let next = pow_nonneg(z.abs(), 1.0 / one_minus_a);
    Ok((
        next,
        StepFlags {
            z_negative: z < 0.0,
            clamped: inner.clamped,
        },
    ))
}

/// One Euler step. Negative output is data, not an error.
pub fn euler_step(variant: EulerVariant, x: f64, dt: f64, dw: f64, params: &CevParams) -> f64 {
    euler_step_flagged(variant, x, dt, dw, params).0
}

fn euler_step_flagged(
    variant: EulerVariant,
    x: f64,
    dt: f64,
    dw: f64,
    params: &CevParams,
) -> (f64, StepFlags) {
    let (k, l, sigma, a) = (params.k(), params.l(), params.sigma(), params.a());
    let raw = match variant {
        // |x|^a keeps the iteration defined once x has gone negative.
        EulerVariant::Naive | EulerVariant::Reflected => {
            x + (k * l - k * x) * dt + sigma * pow_nonneg(x.abs(), a) * dw
        }
        EulerVariant::FullTruncation => {
            let xp = x.max(0.0);
            x + (k * l - k * xp) * dt + sigma * pow_nonneg(xp, a) * dw
        }
    };
    let flags = StepFlags {
        z_negative: raw < 0.0,
        clamped: false,
    };
    match variant {
        EulerVariant::Reflected => (raw.abs(), flags),
        _ => (raw, flags),
    }
}

/// One step of `scheme`.
pub fn step(
    scheme: SchemeId,
    x: f64,
    dt: f64,
    dw: f64,
    params: &CevParams,
) -> Result<(f64, StepFlags)> {
    match scheme.euler_variant() {
        None => semidiscrete_step(x, dt, dw, params),
        Some(v) => Ok(euler_step_flagged(v, x, dt, dw, params)),
    }
}

/// Checks that `scheme` may run with step `dt`: the semi-discrete scheme
/// needs the feasibility conditions, the baselines only a positive step.
pub fn check_feasible(scheme: SchemeId, params: &CevParams, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CevError::Infeasible {
            dt,
            reason: "step must be finite and > 0".into(),
        });
    }
    if scheme == SchemeId::SemiDiscrete {
        let report = validate_assumption_a(params, dt);
        if let Some(reason) = report.violation(dt) {
            return Err(CevError::Infeasible { dt, reason });
        }
    }
    Ok(())
}

/// Running totals over a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub terminal: f64,
    pub sign_flip_count: u64,
    pub clamp_count: u64,
    pub min_value: f64,
}

/// Iterates `scheme` from `x0` over `increments`, calling `visit(k, y_k)`
/// for every state a step is taken from, and returns the totals. No
/// feasibility check is performed.
pub(crate) fn drive<F>(
    scheme: SchemeId,
    params: &CevParams,
    dt: f64,
    increments: &[f64],
    mut visit: F,
) -> Result<PathSummary>
where
    F: FnMut(usize, f64, StepFlags),
{
    let mut y = params.x0();
    let mut summary = PathSummary {
        terminal: y,
        sign_flip_count: 0,
        clamp_count: 0,
        min_value: y,
    };
    for (k, &dw) in increments.iter().enumerate() {
        let (next, flags) = step(scheme, y, dt, dw, params)?;
        summary.sign_flip_count += u64::from(flags.z_negative);
        summary.clamp_count += u64::from(flags.clamped);
        summary.min_value = summary.min_value.min(next);
        visit(k, next, flags);
        y = next;
    }
    summary.terminal = y;
    Ok(summary)
}

/// Terminal value of one path, checking grid and feasibility first.
pub fn simulate_terminal(
    scheme: SchemeId,
    params: &CevParams,
    grid: &TimeGrid,
    inc: &IncrementArray,
) -> Result<PathSummary> {
    check_grid(grid, inc)?;
    check_feasible(scheme, params, grid.dt())?;
    drive(scheme, params, grid.dt(), inc.values(), |_, _, _| {})
}

fn check_grid(grid: &TimeGrid, inc: &IncrementArray) -> Result<()> {
    if inc.len() != grid.n_steps() {
        return Err(CevError::GridMismatch(format!(
            "{} increments for {} steps",
            inc.len(),
            grid.n_steps()
        )));
    }
    if (inc.dt() - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(CevError::GridMismatch(format!(
            "increment step {} differs from grid step {}",
            inc.dt(),
            grid.dt()
        )));
    }
    Ok(())
}

/// A simulated trajectory with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub times: Vec<f64>,
    /// `values[0] = x0`, `values[k + 1]` is the state after step `k`.
    pub values: Vec<f64>,
    /// Per step: whether that step's sign event occurred.
    pub z_negative: Vec<bool>,
    pub sign_flip_count: u64,
    pub clamp_count: u64,
    pub min_value: f64,
}

pub fn simulate_path(
    scheme: SchemeId,
    params: &CevParams,
    grid: &TimeGrid,
    inc: &IncrementArray,
) -> Result<PathResult> {
    check_grid(grid, inc)?;
    check_feasible(scheme, params, grid.dt())?;
    let n = grid.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    let mut z_negative = Vec::with_capacity(n);
    values.push(params.x0());
    let summary = drive(scheme, params, grid.dt(), inc.values(), |_, y, flags| {
        values.push(y);
        z_negative.push(flags.z_negative);
    })?;
    Ok(PathResult {
        times: grid.times(),
        values,
        z_negative,
        sign_flip_count: summary.sign_flip_count,
        clamp_count: summary.clamp_count,
        min_value: summary.min_value,
    })
}
