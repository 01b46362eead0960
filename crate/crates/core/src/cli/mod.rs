//! `cevlab <experiment> --config <file> [--section.key=value …] [--out=<path>] [--dry-run]`
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 validation error,
//! 3 runtime numerical error.

mod config;
mod report;

use std::fs;
use std::io::Write;

pub use config::{parse_config, ConfigError, ExperimentKind, OutputFormat, RunConfig, KEYS};
pub use report::{Outcome, CONVERGENCE_HEADER, METRIC_HEADER, SIMULATE_HEADER, VERSION};

use crate::brownian::{sample_increments, StreamKey};
use crate::experiments::{
    moment_check, negativity_stats, price_payoff_with, run_with_threads, strong_error,
};
use crate::model::validate_assumption_a;
use crate::schemes::simulate_path;
use crate::CevError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CEVLAB_THREADS";

const USAGE: &str = "usage: cevlab <check|simulate|convergence|moments|negativity|price> \
[--config <file>] [--section.key=value ...] [--out=<path>] [--dry-run]";

/// Runs the experiment described by `config`.
pub fn execute(config: &RunConfig) -> crate::Result<Outcome> {
    let params = &config.params;
    let grid = &config.grid;
    Ok(match config.experiment {
        ExperimentKind::Check => Outcome::Check {
            dt: grid.dt(),
            report: validate_assumption_a(params, grid.dt()),
        },
        ExperimentKind::Simulate => {
            let paths = (0..config.n_paths as u64)
                .map(|p| {
                    let inc = sample_increments(
                        StreamKey::new(config.seed, p),
                        grid.n_steps(),
                        grid.dt(),
                    )?;
                    simulate_path(config.scheme, params, grid, &inc)
                })
                .collect::<crate::Result<Vec<_>>>()?;
            Outcome::Simulate(paths)
        }
        ExperimentKind::Convergence => Outcome::Convergence(strong_error(
            params,
            config.scheme,
            &config.level_spec(),
            grid.t_end(),
        )?),
        ExperimentKind::Moments => Outcome::Moments(moment_check(
            params,
            config.scheme,
            grid,
            config.n_paths,
            config.seed,
        )?),
        ExperimentKind::Negativity => {
            Outcome::Negativity(negativity_stats(params, grid, config.n_paths, config.seed)?)
        }
        ExperimentKind::Price => {
            let payoff = config.payoff.as_ref().ok_or(CevError::InvalidParameter {
                name: "payoff",
                reason: "price runs need a payoff".into(),
            })?;
            Outcome::Price(price_payoff_with(
                config.scheme,
                params,
                payoff,
                grid,
                config.n_paths,
                config.seed,
            )?)
        }
    })
}

fn exit_code_for(err: &CevError) -> i32 {
    match err {
        CevError::InvalidParameter { .. }
        | CevError::Infeasible { .. }
        | CevError::InfeasibleLevel { .. }
        | CevError::InvalidLevelSpec(_)
        | CevError::GridMismatch(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

struct Invocation {
    experiment: Option<String>,
    config_path: Option<String>,
    overrides: Vec<(String, String)>,
    dry_run: bool,
}

fn parse_args(args: &[String]) -> Result<Invocation, String> {
    let mut inv = Invocation {
        experiment: None,
        config_path: None,
        overrides: Vec::new(),
        dry_run: false,
    };
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--dry-run" {
            inv.dry_run = true;
        } else if arg == "--config" || arg == "--out" {
            let value = iter
                .next()
                .ok_or_else(|| format!("{arg} needs a value"))?
                .clone();
            if arg == "--config" {
                inv.config_path = Some(value);
            } else {
                inv.overrides.push(("out".into(), value));
            }
        } else if let Some(flag) = arg.strip_prefix("--") {
            let (key, value) = flag
                .split_once('=')
                .ok_or_else(|| format!("flag {arg} must have the form --key=value"))?;
            if key == "config" {
                inv.config_path = Some(value.to_string());
            } else {
                inv.overrides.push((key.to_string(), value.to_string()));
            }
        } else if inv.experiment.is_none() {
            inv.experiment = Some(arg.clone());
        } else {
            return Err(format!("unexpected argument '{arg}'"));
        }
    }
    Ok(inv)
}

/// Parses a `CEVLAB_THREADS` value; `None` means machine default.
pub fn parse_threads(raw: Option<&str>) -> Result<Option<usize>, String> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!(
                "{THREADS_ENV} must be a positive integer, got '{s}'"
            )),
        },
    }
}

/// Entry point behind the binary. `args` excludes the program name.
pub fn main_with_args(
    args: &[String],
    threads_env: Option<&str>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    if args.is_empty() {
        let _ = writeln!(stderr, "{USAGE}");
        return EXIT_USAGE;
    }
    if args.iter().any(|a| a == "--help" || a == "-h") {
        let _ = writeln!(stdout, "{USAGE}");
        return EXIT_OK;
    }
    let inv = match parse_args(args) {
        Ok(inv) => inv,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}\n{USAGE}");
            return EXIT_USAGE;
        }
    };
    let Some(experiment) = inv.experiment else {
        let _ = writeln!(stderr, "error: missing experiment\n{USAGE}");
        return EXIT_USAGE;
    };
    if let Err(msg) = experiment.parse::<ExperimentKind>() {
        let _ = writeln!(stderr, "error: {msg}\n{USAGE}");
        return EXIT_USAGE;
    }
    let threads = match parse_threads(threads_env) {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let text = match &inv.config_path {
        None => String::new(),
        Some(path) => match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                let _ = writeln!(stderr, "error: cannot read config {path}: {e}");
                return EXIT_USAGE;
            }
        },
    };
    let mut overrides = vec![("experiment.kind".to_string(), experiment)];
    overrides.extend(inv.overrides);
    let config = match parse_config(&text, &overrides) {
        Ok(c) => c,
        Err(e @ ConfigError::Parse { .. }) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
        Err(e @ ConfigError::Validation(_)) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_VALIDATION;
        }
    };
    if inv.dry_run {
        let _ = write!(stdout, "{}", config.to_config_text());
        return EXIT_OK;
    }

    let outcome = match run_with_threads(threads, || execute(&config)).and_then(|r| r) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code_for(&e);
        }
    };
    let body = match config.format {
        OutputFormat::Csv => outcome.to_csv(),
        OutputFormat::Json => outcome.to_json(&config),
    };
    match &config.out {
        Some(path) => {
            if let Err(e) = fs::write(path, body) {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                return EXIT_RUNTIME;
            }
            let _ = writeln!(stdout, "{} -> {}", outcome.summary(), path.display());
        }
        None => {
            let _ = write!(stdout, "{body}");
            let _ = writeln!(stderr, "{}", outcome.summary());
        }
    }
    EXIT_OK
}
