//! Mean-reverting CEV model
//!
//! ```text
//! x_t = x_0 + ∫ (kl - k x_s) ds + σ ∫ x_s^a dW_s
//! ```
//!
//! Besides the parameter type this module owns the pieces of the scheme that
//! do not involve randomness: the step-size feasibility region, the
//! deterministic inner expression `y(1-kΔ) + Δ(kl - aσ²y^{2a-1}/2)`, the
//! first moment of the exact solution and the one-step probability that the
//! scheme's pre-image `z` falls below zero.

use crate::{CevError, Result};

/// Rounding slack tolerated on the inner expression, relative to `max(1, y)`.
pub const INNER_CLAMP_TOLERANCE: f64 = 1e-12;

/// Parameters of the mean-reverting CEV model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CevParams {
    k: f64,
    l: f64,
    sigma: f64,
    a: f64,
    x0: f64,
}

impl CevParams {
    /// Validates `k, l, σ ≥ 0`, `1/2 < a < 1` and `x0 > 0`.
    pub fn new(k: f64, l: f64, sigma: f64, a: f64, x0: f64) -> Result<Self> {
        fn nonneg(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(CevError::InvalidParameter {
                    name,
                    reason: format!("{name} must be finite and >= 0, got {v}"),
                })
            }
        }
        nonneg("k", k)?;
        nonneg("l", l)?;
        nonneg("sigma", sigma)?;
        if !(a > 0.5 && a < 1.0) {
            return Err(CevError::InvalidParameter {
                name: "a",
                reason: format!("a must lie in (0.5, 1), got {a}"),
            });
        }
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(CevError::InvalidParameter {
                name: "x0",
                reason: format!("x0 must be finite and > 0, got {x0}"),
            });
        }
        Ok(Self { k, l, sigma, a, x0 })
    }

    /// Mean-reversion speed.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Long-run level.
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// CEV exponent.
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Same model started from another initial state.
    pub fn with_x0(&self, x0: f64) -> Result<Self> {
        Self::new(self.k, self.l, self.sigma, self.a, x0)
    }

    /// Same model with another diffusion coefficient.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.k, self.l, sigma, self.a, self.x0)
    }

    /// `kl - aσ²/2`; nonnegative exactly when the drift condition holds.
    pub fn drift_margin(&self) -> f64 {
        self.k * self.l - self.half_a_sigma2()
    }

    /// Guaranteed lower bound on the strong order, `a(a - 1/2)`.
    pub fn theoretical_order(&self) -> f64 {
        self.a * (self.a - 0.5)
    }

    fn half_a_sigma2(&self) -> f64 {
        self.a * self.sigma * self.sigma / 2.0
    }
}

/// Uniform grid `0 = t_0 < … < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(CevError::InvalidParameter {
                name: "t_end",
                reason: format!("t_end must be finite and > 0, got {t_end}"),
            });
        }
        if n_steps == 0 {
            return Err(CevError::InvalidParameter {
                name: "n_steps",
                reason: "n_steps must be >= 1".into(),
            });
        }
        Ok(Self {
            t_end,
            n_steps,
            dt: t_end / n_steps as f64,
        })
    }

    /// Grid with `2^exponent` steps.
    pub fn dyadic(t_end: f64, exponent: u32) -> Result<Self> {
        if exponent >= usize::BITS - 1 {
            return Err(CevError::InvalidParameter {
                name: "exponent",
                reason: format!("2^{exponent} steps do not fit in memory"),
            });
        }
        Self::new(t_end, 1usize << exponent)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t_k = k·Δ`, except the last node which is `T` exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }

    /// All `n + 1` grid nodes.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// Outcome of checking the two feasibility inequalities for a step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionAReport {
    pub feasible: bool,
    /// `kl ≥ aσ²/2`
    pub drift_condition_ok: bool,
    /// `Δ ≤ 2/(2k + aσ²)`
    pub step_condition_ok: bool,
    /// `2/(2k + aσ²)`, `+∞` when `k = σ = 0`.
    pub max_step: f64,
    /// `kl - aσ²/2`
    pub margin: f64,
}

impl AssumptionAReport {
    /// Human-readable reason for infeasibility, `None` when feasible.
    pub fn violation(&self, dt: f64) -> Option<String> {
        match (self.drift_condition_ok, self.step_condition_ok) {
            (true, true) => None,
            (false, true) => Some(format!(
                "drift condition kl >= a*sigma^2/2 fails (margin {})",
                self.margin
            )),
            (true, false) => Some(format!(
                "step condition dt <= 2/(2k + a*sigma^2) = {} fails for dt = {dt}",
                self.max_step
            )),
            (false, false) => Some(format!(
                "drift condition fails (margin {}) and dt = {dt} exceeds max step {}",
                self.margin, self.max_step
            )),
        }
    }
}

/// Largest step for which the inner expression stays nonnegative.
pub fn max_stable_step(params: &CevParams) -> f64 {
    let denom = 2.0 * params.k + params.a * params.sigma * params.sigma;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        2.0 / denom
    }
}

/// Both inequalities are non-strict: equality is accepted.
pub fn validate_assumption_a(params: &CevParams, dt: f64) -> AssumptionAReport {
    let max_step = max_stable_step(params);
    let margin = params.drift_margin();
    let drift_condition_ok = params.k * params.l >= params.half_a_sigma2();
    let step_condition_ok = dt > 0.0 && dt <= max_step;
    AssumptionAReport {
        feasible: drift_condition_ok && step_condition_ok,
        drift_condition_ok,
        step_condition_ok,
        max_step,
        margin,
    }
}

/// `x^p` for `x ≥ 0`, `p > 0`, with `0^p = 0` short-circuited.
#[inline]
pub(crate) fn pow_nonneg(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

/// The inner expression, possibly clamped from a rounding-level negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inner {
    pub value: f64,
    pub clamped: bool,
}

/// `y(1 - kΔ) + Δ(kl - (aσ²/2) y^{2a-1})`.
///
/// Nonnegative in exact arithmetic whenever the step is feasible. A negative
/// result no larger in magnitude than `1e-12·max(1, y)` is treated as
/// rounding and clamped to zero; anything beyond that is reported as
/// [`CevError::NegativeInner`].
pub fn inner_value(y: f64, dt: f64, params: &CevParams) -> Result<Inner> {
    let raw = y * (1.0 - params.k * dt)
        + dt * (params.k * params.l - params.half_a_sigma2() * pow_nonneg(y, 2.0 * params.a - 1.0));
    if raw >= 0.0 {
        return Ok(Inner {
            value: raw,
            clamped: false,
        });
    }
    if raw >= -INNER_CLAMP_TOLERANCE * y.max(1.0) {
        Ok(Inner {
            value: 0.0,
            clamped: true,
        })
    } else {
        Err(CevError::NegativeInner { value: raw, y })
    }
}

/// First moment of the exact solution, `l + (x0 - l)e^{-kt}`.
pub fn analytic_mean(params: &CevParams, t: f64) -> f64 {
    if params.k == 0.0 {
        params.x0
    } else {
        params.l + (params.x0 - params.l) * (-params.k * t).exp()
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(z ≤ 0)` for one step started at `y`:
/// `Φ(-inner^{1-a} / (σ(1-a)√Δ))`. Zero when σ = 0.
pub fn step_negativity_prob(y: f64, dt: f64, params: &CevParams) -> Result<f64> {
    let inner = inner_value(y, dt, params)?;
    Ok(negativity_prob_from_inner(inner.value, dt, params))
}

/// Same as [`step_negativity_prob`] for a given inner value.
pub fn negativity_prob_from_inner(inner: f64, dt: f64, params: &CevParams) -> f64 {
    if params.sigma == 0.0 {
        return 0.0;
    }
    let one_minus_a = 1.0 - params.a;
    let threshold = pow_nonneg(inner, one_minus_a) / (params.sigma * one_minus_a * dt.sqrt());
    normal_cdf(-threshold)
}
