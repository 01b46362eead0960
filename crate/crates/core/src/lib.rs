//! Explicit positivity-preserving simulation of the mean-reverting CEV model
//!
//! ```text
//! dx = k(l - x) dt + σ x^a dW,   1/2 < a < 1
//! ```
//!
//! The crate provides the model parameters and step-size feasibility checks
//! ([`model`]), reproducible Brownian increments with exact coarsening
//! ([`brownian`]), the semi-discrete stepper plus three Euler baselines
//! ([`schemes`]), a Monte Carlo experiment engine ([`experiments`]) and the
//! configuration/reporting layer behind the `cevlab` binary ([`cli`]).

pub mod brownian;
pub mod cli;
mod error;
pub mod experiments;
pub mod model;
pub mod schemes;

pub use brownian::{coarsen, sample_increments, IncrementArray, StreamKey};
pub use error::CevError;
pub use experiments::{
    deterministic_error, fit_order, moment_check, negativity_stats, price_payoff,
    price_payoff_with, run_with_threads, strong_error, ConvergenceReport, LevelRecord, LevelSpec,
    MomentReport, NegativityStats, OrderFit, PayoffKind, PayoffSpec, PriceEstimate,
};
pub use model::{
    analytic_mean, inner_value, max_stable_step, negativity_prob_from_inner, normal_cdf,
    step_negativity_prob, validate_assumption_a, AssumptionAReport, CevParams, Inner, TimeGrid,
};
pub use schemes::{
    euler_step, semidiscrete_step, simulate_path, simulate_terminal, EulerVariant, PathResult,
    PathSummary, SchemeId, StepFlags,
};

pub type Result<T> = std::result::Result<T, CevError>;
