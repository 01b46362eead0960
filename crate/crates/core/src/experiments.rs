//! Monte Carlo experiments: strong error and empirical order, moment
//! diagnostics, sign-event statistics and payoff pricing.
//!
//! Paths are independent work items and run on the current rayon pool. Every
//! per-path result is collected in path-index order before any reduction, so
//! reports are bit-identical for a given seed whatever the thread count.

use rayon::prelude::*;

use crate::brownian::{sample_increments, StreamKey};
use crate::model::{analytic_mean, inner_value, negativity_prob_from_inner, CevParams, TimeGrid};
use crate::schemes::{check_feasible, drive, SchemeId};
use crate::{CevError, Result};

/// Smallest path count accepted for a statistical report.
pub const MIN_REPORT_PATHS: usize = 1000;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`.
pub fn run_with_threads<R, F>(threads: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CevError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Evaluates `f` for every path index and returns the results in index
/// order. The first failing path (by index) determines the error.
fn map_paths<T, F>(n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..n_paths as u64).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

fn require_paths(n_paths: usize) -> Result<()> {
    if n_paths < MIN_REPORT_PATHS {
        return Err(CevError::InvalidParameter {
            name: "n_paths",
            reason: format!("reports need at least {MIN_REPORT_PATHS} paths, got {n_paths}"),
        });
    }
    Ok(())
}

/// Sample mean and standard error of the mean, summed in slice order.
fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().fold(0.0, |s, &x| s + x) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().fold(0.0, |s, &x| s + (x - mean) * (x - mean));
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Refinement levels of a strong-error experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSpec {
    /// Reference step is `T/2^ref_exponent`.
    pub ref_exponent: u32,
    /// Test steps `T/2^e`, strictly ascending, all below `ref_exponent`.
    pub test_exponents: Vec<u32>,
    pub n_paths: usize,
    pub master_seed: u64,
}

/// Largest reference exponent accepted (2^24 fine steps per path).
pub const MAX_EXPONENT: u32 = 24;

impl LevelSpec {
    pub fn validate(&self) -> Result<()> {
        self.validate_inner(false)
    }

    fn validate_inner(&self, allow_degenerate: bool) -> Result<()> {
        if self.test_exponents.is_empty() {
            return Err(CevError::InvalidLevelSpec("no test levels".into()));
        }
        if self.ref_exponent > MAX_EXPONENT {
            return Err(CevError::InvalidLevelSpec(format!(
                "reference exponent {} exceeds {MAX_EXPONENT}",
                self.ref_exponent
            )));
        }
        if self.test_exponents.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CevError::InvalidLevelSpec(format!(
                "test exponents must be strictly ascending: {:?}",
                self.test_exponents
            )));
        }
        let max_test = *self.test_exponents.last().unwrap();
        let ok = if allow_degenerate {
            max_test <= self.ref_exponent
        } else {
            max_test < self.ref_exponent
        };
        if !ok {
            return Err(CevError::InvalidLevelSpec(format!(
                "reference exponent {} must exceed every test exponent (max {max_test})",
                self.ref_exponent
            )));
        }
        if self.n_paths == 0 {
            return Err(CevError::InvalidLevelSpec("n_paths must be >= 1".into()));
        }
        Ok(())
    }

    /// Every level the scheme will run at, coarsest first, reference last.
    fn all_exponents(&self) -> impl Iterator<Item = u32> + '_ {
        self.test_exponents
            .iter()
            .copied()
            .chain(std::iter::once(self.ref_exponent))
    }
}

/// Least-squares line through `(ln dt, ln rmse)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Strong error at one test level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRecord {
    pub exponent: u32,
    pub dt: f64,
    /// Estimate of `E|y_ref(T) - y_dt(T)|²`.
    pub mse: f64,
    pub rmse: f64,
    /// 95% half-width on `mse`.
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub scheme: SchemeId,
    pub t_end: f64,
    pub ref_exponent: u32,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Sorted by `dt` descending.
    pub levels: Vec<LevelRecord>,
    /// `None` when fewer than two levels or a zero error makes the fit undefined.
    pub fit: Option<OrderFit>,
    /// `a(a - 1/2)`
    pub theoretical_order: f64,
}

/// Strong error of `scheme` at each test level against the same scheme at
/// the reference level, driven by the same Brownian path.
pub fn strong_error(
    params: &CevParams,
    scheme: SchemeId,
    spec: &LevelSpec,
    t_end: f64,
) -> Result<ConvergenceReport> {
    spec.validate()?;
    require_paths(spec.n_paths)?;
    strong_error_impl(params, scheme, spec, t_end)
}

/// Fails with [`CevError::InfeasibleLevel`] naming the coarsest level `scheme`
/// cannot run at.
pub fn check_levels(
    params: &CevParams,
    scheme: SchemeId,
    spec: &LevelSpec,
    t_end: f64,
) -> Result<()> {
    for e in spec.all_exponents() {
        let grid = TimeGrid::dyadic(t_end, e)?;
        if let Err(err) = check_feasible(scheme, params, grid.dt()) {
            let reason = match err {
                CevError::Infeasible { reason, .. } => reason,
                other => other.to_string(),
            };
            return Err(CevError::InfeasibleLevel {
                exponent: e,
                dt: grid.dt(),
                reason,
            });
        }
    }
    Ok(())
}

pub(crate) fn strong_error_impl(
    params: &CevParams,
    scheme: SchemeId,
    spec: &LevelSpec,
    t_end: f64,
) -> Result<ConvergenceReport> {
    check_levels(params, scheme, spec, t_end)?;
    let fine = TimeGrid::dyadic(t_end, spec.ref_exponent)?;
    let levels: Vec<(u32, TimeGrid)> = spec
        .test_exponents
        .iter()
        .map(|&e| TimeGrid::dyadic(t_end, e).map(|g| (e, g)))
        .collect::<Result<_>>()?;

    let per_path: Vec<Vec<f64>> = map_paths(spec.n_paths, |p| {
        let inc = sample_increments(
            StreamKey::new(spec.master_seed, p),
            fine.n_steps(),
            fine.dt(),
        )?;
        let reference = drive(scheme, params, fine.dt(), inc.values(), |_, _, _| {})?.terminal;
        levels
            .iter()
            .map(|(e, grid)| {
                let coarse = inc.coarsen(1usize << (spec.ref_exponent - e))?;
                let y = drive(scheme, params, grid.dt(), coarse.values(), |_, _, _| {})?.terminal;
                Ok((y - reference) * (y - reference))
            })
            .collect()
    })?;

    let mut column = Vec::with_capacity(spec.n_paths);
    let records: Vec<LevelRecord> = levels
        .iter()
        .enumerate()
        .map(|(i, (e, grid))| {
            column.clear();
            column.extend(per_path.iter().map(|row| row[i]));
            let (mse, se) = mean_and_se(&column);
            LevelRecord {
                exponent: *e,
                dt: grid.dt(),
                mse,
                rmse: mse.sqrt(),
                ci_halfwidth: Z_95 * se,
            }
        })
        .collect();

    Ok(ConvergenceReport {
        scheme,
        t_end,
        ref_exponent: spec.ref_exponent,
        n_paths: spec.n_paths,
        master_seed: spec.master_seed,
        fit: fit_records(&records),
        levels: records,
        theoretical_order: params.theoretical_order(),
    })
}

fn fit_records(records: &[LevelRecord]) -> Option<OrderFit> {
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.dt, r.rmse)).collect();
    fit_order(&points).ok()
}

/// Error of `scheme` at `T` against the exact solution of the noise-free
/// model, `l + (x0 - l)e^{-kT}`. Requires `σ = 0`.
pub fn deterministic_error(
    params: &CevParams,
    scheme: SchemeId,
    exponents: &[u32],
    t_end: f64,
) -> Result<ConvergenceReport> {
    if params.sigma() != 0.0 {
        return Err(CevError::InvalidParameter {
            name: "sigma",
            reason: "the exact reference is only available for sigma = 0".into(),
        });
    }
    let spec = LevelSpec {
        ref_exponent: exponents.iter().copied().max().unwrap_or(0) + 1,
        test_exponents: exponents.to_vec(),
        n_paths: 1,
        master_seed: 0,
    };
    spec.validate()?;
    let exact = analytic_mean(params, t_end);
    let records = exponents
        .iter()
        .map(|&e| {
            let grid = TimeGrid::dyadic(t_end, e)?;
            check_feasible(scheme, params, grid.dt()).map_err(|err| CevError::InfeasibleLevel {
                exponent: e,
                dt: grid.dt(),
                reason: err.to_string(),
            })?;
            let zeros = vec![0.0; grid.n_steps()];
            let y = drive(scheme, params, grid.dt(), &zeros, |_, _, _| {})?.terminal;
            let mse = (y - exact) * (y - exact);
            Ok(LevelRecord {
                exponent: e,
                dt: grid.dt(),
                mse,
                rmse: mse.sqrt(),
                ci_halfwidth: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        scheme,
        t_end,
        ref_exponent: spec.ref_exponent,
        n_paths: 1,
        master_seed: 0,
        fit: fit_records(&records),
        levels: records,
        theoretical_order: params.theoretical_order(),
    })
}

/// Ordinary least squares on `(ln dt, ln rmse)`; the slope is the empirical
/// strong order.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 2 {
        return Err(CevError::InsufficientPoints(points.len()));
    }
    if let Some(&(dt, rmse)) = points.iter().find(|(dt, r)| !(*dt > 0.0 && *r > 0.0)) {
        return Err(CevError::NonPositiveValue { dt, rmse });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        // all steps equal
        return Err(CevError::InsufficientPoints(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(OrderFit {
        slope,
        intercept,
        r2,
    })
}

/// Terminal-value moments against the exact first moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub n_paths: usize,
    pub t_end: f64,
    pub sample_mean: f64,
    pub sample_second_moment: f64,
    pub se_mean: f64,
    pub se_second: f64,
    pub analytic_mean: f64,
    pub abs_mean_error: f64,
}

fn terminal_values(
    params: &CevParams,
    scheme: SchemeId,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_feasible(scheme, params, grid.dt())?;
    map_paths(n_paths, |p| {
        let inc = sample_increments(StreamKey::new(seed, p), grid.n_steps(), grid.dt())?;
        Ok(drive(scheme, params, grid.dt(), inc.values(), |_, _, _| {})?.terminal)
    })
}

pub fn moment_check(
    params: &CevParams,
    scheme: SchemeId,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<MomentReport> {
    require_paths(n_paths)?;
    let terminals = terminal_values(params, scheme, grid, n_paths, seed)?;
    let (sample_mean, se_mean) = mean_and_se(&terminals);
    let squares: Vec<f64> = terminals.iter().map(|y| y * y).collect();
    let (sample_second_moment, se_second) = mean_and_se(&squares);
    let exact = analytic_mean(params, grid.t_end());
    Ok(MomentReport {
        n_paths,
        t_end: grid.t_end(),
        sample_mean,
        sample_second_moment,
        se_mean,
        se_second,
        analytic_mean: exact,
        abs_mean_error: (sample_mean - exact).abs(),
    })
}

/// Sign-event counts of the semi-discrete scheme against the exact
/// per-step probability `P(z ≤ 0)` evaluated along the visited states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativityStats {
    pub n_paths: usize,
    pub total_steps: u64,
    pub sign_flip_events: u64,
    pub clamp_events: u64,
    /// Largest per-step probability over every state a step was taken from.
    pub max_step_prob: f64,
    /// Sum of the per-step probabilities, the expected event count.
    pub expected_events: f64,
}

pub fn negativity_stats(
    params: &CevParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<NegativityStats> {
    check_feasible(SchemeId::SemiDiscrete, params, grid.dt())?;
    let dt = grid.dt();
    let n = grid.n_steps();
    let prob_at = |y: f64| -> Result<f64> {
        let inner = inner_value(y, dt, params)?;
        Ok(negativity_prob_from_inner(inner.value, dt, params))
    };
    let per_path = map_paths(n_paths, |p| {
        let inc = sample_increments(StreamKey::new(seed, p), n, dt)?;
        let first = prob_at(params.x0())?;
        let mut max_prob = first;
        let mut expected = first;
        let mut failure = None;
        let summary = drive(
            SchemeId::SemiDiscrete,
            params,
            dt,
            inc.values(),
            |k, y, _| {
                if k + 1 < n && failure.is_none() {
                    match prob_at(y) {
                        Ok(q) => {
                            max_prob = max_prob.max(q);
                            expected += q;
                        }
                        Err(e) => failure = Some(e),
                    }
                }
            },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((
            summary.sign_flip_count,
            summary.clamp_count,
            max_prob,
            expected,
        ))
    })?;
    let mut stats = NegativityStats {
        n_paths,
        total_steps: (n_paths as u64) * (n as u64),
        sign_flip_events: 0,
        clamp_events: 0,
        max_step_prob: 0.0,
        expected_events: 0.0,
    };
    for (flips, clamps, max_prob, expected) in per_path {
        stats.sign_flip_events += flips;
        stats.clamp_events += clamps;
        stats.max_step_prob = stats.max_step_prob.max(max_prob);
        stats.expected_events += expected;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayoffKind {
    EuropeanCall,
    EuropeanPut,
    /// Call on the arithmetic mean of `y_{t_1}, …, y_{t_n}` (`x0` excluded).
    AsianArithmeticCall,
}

impl PayoffKind {
    pub fn name(&self) -> &'static str {
        match self {
            PayoffKind::EuropeanCall => "european-call",
            PayoffKind::EuropeanPut => "european-put",
            PayoffKind::AsianArithmeticCall => "asian-call",
        }
    }
}

impl std::str::FromStr for PayoffKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "european-call" | "call" => Ok(PayoffKind::EuropeanCall),
            "european-put" | "put" => Ok(PayoffKind::EuropeanPut),
            "asian-call" | "asian-arithmetic-call" => Ok(PayoffKind::AsianArithmeticCall),
            _ => Err(format!(
                "unknown payoff '{s}' (expected european-call, european-put or asian-call)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub strike: f64,
}

impl PayoffSpec {
    pub fn new(kind: PayoffKind, strike: f64) -> Result<Self> {
        if !(strike.is_finite() && strike >= 0.0) {
            return Err(CevError::InvalidParameter {
                name: "strike",
                reason: format!("strike must be finite and >= 0, got {strike}"),
            });
        }
        Ok(Self { kind, strike })
    }
}

/// Undiscounted Monte Carlo price with its 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    pub price: f64,
    pub se: f64,
    pub ci_halfwidth: f64,
    pub n_paths: usize,
    /// Paths whose terminal value was negative (baseline schemes only).
    pub negative_terminals: usize,
}

/// Prices `payoff` over semi-discrete paths.
pub fn price_payoff(
    params: &CevParams,
    payoff: &PayoffSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PriceEstimate> {
    price_payoff_with(SchemeId::SemiDiscrete, params, payoff, grid, n_paths, seed)
}

/// Prices `payoff` over paths of an arbitrary scheme.
pub fn price_payoff_with(
    scheme: SchemeId,
    params: &CevParams,
    payoff: &PayoffSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PriceEstimate> {
    require_paths(n_paths)?;
    check_feasible(scheme, params, grid.dt())?;
    let strike = payoff.strike;
    let per_path = map_paths(n_paths, |p| {
        let inc = sample_increments(StreamKey::new(seed, p), grid.n_steps(), grid.dt())?;
        let mut running = 0.0;
        let terminal = drive(scheme, params, grid.dt(), inc.values(), |_, y, _| {
            running += y
        })?
        .terminal;
        let value = match payoff.kind {
            PayoffKind::EuropeanCall => (terminal - strike).max(0.0),
            PayoffKind::EuropeanPut => (strike - terminal).max(0.0),
            PayoffKind::AsianArithmeticCall => (running / grid.n_steps() as f64 - strike).max(0.0),
        };
        Ok((value, terminal < 0.0))
    })?;
    let values: Vec<f64> = per_path.iter().map(|v| v.0).collect();
    let (price, se) = mean_and_se(&values);
    Ok(PriceEstimate {
        price,
        se,
        ci_halfwidth: Z_95 * se,
        n_paths,
        negative_terminals: per_path.iter().filter(|v| v.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> CevParams {
        CevParams::new(1.0, 1.0, 1.0, 0.75, 1.0).unwrap()
    }

    #[test]
    fn self_coupled_level_has_zero_error() {
        let spec = LevelSpec {
            ref_exponent: 5,
            test_exponents: vec![3, 5],
            n_paths: 200,
            master_seed: 11,
        };
        assert!(spec.validate().is_err());
        spec.validate_inner(true).unwrap();
        let report = strong_error_impl(&standard(), SchemeId::SemiDiscrete, &spec, 1.0).unwrap();
        assert_eq!(report.levels[1].mse, 0.0);
        assert_eq!(report.levels[1].ci_halfwidth, 0.0);
        assert!(report.levels[0].mse > 0.0);
        assert!(report.fit.is_none());
    }

    #[test]
    fn level_spec_rules() {
        let mut spec = LevelSpec {
            ref_exponent: 8,
            test_exponents: vec![2, 4, 6],
            n_paths: 1000,
            master_seed: 0,
        };
        spec.validate().unwrap();
        spec.test_exponents = vec![4, 2];
        assert!(spec.validate().is_err());
        spec.test_exponents = vec![];
        assert!(spec.validate().is_err());
        spec.test_exponents = vec![2, 8];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn infeasible_level_names_the_exponent() {
        // max step 2/2.75 ≈ 0.727: level 0 (Δ = 1) is infeasible.
        let spec = LevelSpec {
            ref_exponent: 6,
            test_exponents: vec![0, 2],
            n_paths: 1000,
            master_seed: 0,
        };
        match strong_error(&standard(), SchemeId::SemiDiscrete, &spec, 1.0) {
            Err(CevError::InfeasibleLevel { exponent, .. }) => assert_eq!(exponent, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_require_enough_paths() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        assert!(moment_check(&standard(), SchemeId::SemiDiscrete, &grid, 10, 0).is_err());
    }

    #[test]
    fn fit_exact_lines() {
        let c = 3.0;
        let pts: Vec<(f64, f64)> = [4, 6, 8]
            .iter()
            .map(|&e| (2f64.powi(-e), c * 2f64.powi(-e)))
            .collect();
        let fit = fit_order(&pts).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!((fit.intercept - c.ln()).abs() < 1e-12);

        let pts = [
            (2f64.powi(-4), 0.25),
            (2f64.powi(-6), 0.125),
            (2f64.powi(-8), 0.0625),
        ];
        assert!((fit_order(&pts).unwrap().slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            fit_order(&[(0.1, 0.2)]),
            Err(CevError::InsufficientPoints(1))
        );
        assert!(matches!(
            fit_order(&[(0.1, 0.2), (0.05, 0.0)]),
            Err(CevError::NonPositiveValue { .. })
        ));
        assert!(fit_order(&[(0.1, 0.2), (0.1, 0.3)]).is_err());
    }

    #[test]
    fn deterministic_error_requires_no_noise() {
        assert!(deterministic_error(&standard(), SchemeId::SemiDiscrete, &[2, 3], 1.0).is_err());
    }

    #[test]
    fn payoff_parsing() {
        assert_eq!(
            "asian_call".parse::<PayoffKind>().unwrap(),
            PayoffKind::AsianArithmeticCall
        );
        assert!("digital".parse::<PayoffKind>().is_err());
        assert!(PayoffSpec::new(PayoffKind::EuropeanCall, -1.0).is_err());
    }

    #[test]
    fn mean_and_se_small_samples() {
        assert_eq!(mean_and_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }
}
