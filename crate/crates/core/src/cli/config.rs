//! Flat `key=value` run configuration.
//!
//! One pair per line, `#` starts a comment. Keys are `section.key`
//! (`model.k`, `grid.n_steps`, …); inside a file the bare key (`k`,
//! `n_steps`) is accepted too. Command-line flags `--section.key=value`
//! override file values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::experiments::{check_levels, LevelSpec, PayoffKind, PayoffSpec, MIN_REPORT_PATHS};
use crate::model::{CevParams, TimeGrid};
use crate::schemes::{check_feasible, SchemeId};

/// Every recognised key, in canonical order.
pub const KEYS: [&str; 17] = [
    "model.k",
    "model.l",
    "model.sigma",
    "model.a",
    "model.x0",
    "grid.t_end",
    "grid.n_steps",
    "experiment.kind",
    "experiment.scheme",
    "experiment.n_paths",
    "experiment.seed",
    "experiment.ref_exponent",
    "experiment.test_exponents",
    "experiment.payoff",
    "experiment.strike",
    "output.format",
    "output.path",
];

const DEFAULT_T_END: f64 = 1.0;
const DEFAULT_N_STEPS: usize = 64;
const DEFAULT_N_PATHS: usize = 1000;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_TEST_EXPONENTS: [u32; 6] = [4, 5, 6, 7, 8, 9];
/// Default reference level sits this many halvings below the finest test level.
const DEFAULT_REF_GAP: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
}

impl ConfigError {
    fn parse(location: impl fmt::Display, message: impl Into<String>) -> Self {
        ConfigError::Parse {
            location: location.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Check,
    Simulate,
    Convergence,
    Moments,
    Negativity,
    Price,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Check,
        ExperimentKind::Simulate,
        ExperimentKind::Convergence,
        ExperimentKind::Moments,
        ExperimentKind::Negativity,
        ExperimentKind::Price,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Check => "check",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Negativity => "negativity",
            ExperimentKind::Price => "price",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                format!("unknown experiment '{s}' (expected check, simulate, convergence, moments, negativity or price)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!(
                "unknown output format '{s}' (expected csv or json)"
            )),
        }
    }
}

/// Fully resolved and validated configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub params: CevParams,
    pub grid: TimeGrid,
    pub scheme: SchemeId,
    pub n_paths: usize,
    pub seed: u64,
    pub ref_exponent: u32,
    pub test_exponents: Vec<u32>,
    pub payoff: Option<PayoffSpec>,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn level_spec(&self) -> LevelSpec {
        LevelSpec {
            ref_exponent: self.ref_exponent,
            test_exponents: self.test_exponents.clone(),
            n_paths: self.n_paths,
            master_seed: self.seed,
        }
    }

    /// Every key that influences the result, with its resolved value.
    /// Feeding these pairs back through [`parse_config`] reproduces the run.
    pub fn resolved_pairs(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let mut pairs = vec![
            ("model.k", fmt_f64(p.k())),
            ("model.l", fmt_f64(p.l())),
            ("model.sigma", fmt_f64(p.sigma())),
            ("model.a", fmt_f64(p.a())),
            ("model.x0", fmt_f64(p.x0())),
            ("grid.t_end", fmt_f64(self.grid.t_end())),
            ("grid.n_steps", self.grid.n_steps().to_string()),
            ("experiment.kind", self.experiment.name().to_string()),
            ("experiment.scheme", self.scheme.name().to_string()),
            ("experiment.n_paths", self.n_paths.to_string()),
            ("experiment.seed", self.seed.to_string()),
            ("experiment.ref_exponent", self.ref_exponent.to_string()),
            (
                "experiment.test_exponents",
                self.test_exponents
                    .iter()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        ];
        if let Some(payoff) = &self.payoff {
            pairs.push(("experiment.payoff", payoff.kind.name().to_string()));
            pairs.push(("experiment.strike", fmt_f64(payoff.strike)));
        }
        pairs
    }

    /// The resolved pairs as a config document.
    pub fn to_config_text(&self) -> String {
        self.resolved_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Shortest representation that parses back to the same bits.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn canonical_key(key: &str) -> Option<&'static str> {
    match key {
        "experiment" => return Some("experiment.kind"),
        "out" => return Some("output.path"),
        "master_seed" | "experiment.master_seed" => return Some("experiment.seed"),
        _ => {}
    }
    KEYS.iter()
        .copied()
        .find(|k| *k == key || k.split_once('.').map(|(_, bare)| bare) == Some(key))
}

#[derive(Debug, Clone)]
enum Source {
    Line(usize),
    Flag(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Line(n) => write!(f, "line {n}"),
            Source::Flag(flag) => write!(f, "flag {flag}"),
        }
    }
}

struct RawConfig {
    values: BTreeMap<&'static str, (String, Source)>,
}

impl RawConfig {
    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((raw, source)) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError::parse(source, format!("{key}: {e}"))),
        }
    }

    fn float(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.get(key)?;
        match v {
            Some(x) if !x.is_finite() => {
                let (_, source) = &self.values[key];
                Err(ConfigError::parse(
                    source,
                    format!("{key}: value must be finite"),
                ))
            }
            other => Ok(other),
        }
    }

    fn required_float(&self, key: &'static str) -> Result<f64, ConfigError> {
        self.float(key)?.ok_or_else(|| missing(key))
    }

    fn exponents(&self, key: &'static str) -> Result<Option<Vec<u32>>, ConfigError> {
        let Some((raw, source)) = self.values.get(key) else {
            return Ok(None);
        };
        parse_exponents(raw)
            .map(Some)
            .map_err(|e| ConfigError::parse(source, format!("{key}: {e}")))
    }
}

fn missing(key: &str) -> ConfigError {
    let bare = key.split_once('.').map_or(key, |(_, b)| b);
    ConfigError::parse("input", format!("missing key: {bare}"))
}

/// `4,5,6` or the inclusive range `4..9`.
fn parse_exponents(raw: &str) -> Result<Vec<u32>, String> {
    let raw = raw.trim();
    if let Some((lo, hi)) = raw.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|e| format!("{e}"))?;
        let hi: u32 = hi.trim().parse().map_err(|e| format!("{e}"))?;
        if lo > hi {
            return Err(format!("empty range {raw}"));
        }
        return Ok((lo..=hi).collect());
    }
    raw.split(',')
        .map(|s| s.trim().parse::<u32>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

fn insert(
    values: &mut BTreeMap<&'static str, (String, Source)>,
    key: &str,
    value: &str,
    source: Source,
) -> Result<&'static str, ConfigError> {
    let canon = canonical_key(key.trim())
        .ok_or_else(|| ConfigError::parse(&source, format!("unknown key: {}", key.trim())))?;
    values.insert(canon, (value.trim().to_string(), source));
    Ok(canon)
}

/// Parses a config document, applies `overrides` (`(key, value)` pairs from
/// `--key=value` flags) and validates the result.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut values = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            ConfigError::parse(
                Source::Line(lineno),
                format!("expected key=value, got '{content}'"),
            )
        })?;
        let canon = insert(&mut values, key, value, Source::Line(lineno))?;
        if let Some(prev) = seen.insert(canon, lineno) {
            return Err(ConfigError::parse(
                Source::Line(lineno),
                format!("duplicate key {canon} (first set on line {prev})"),
            ));
        }
    }
    for (key, value) in overrides {
        insert(&mut values, key, value, Source::Flag(format!("--{key}")))?;
    }
    resolve(RawConfig { values })
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let experiment: ExperimentKind = raw
        .get("experiment.kind")?
        .ok_or_else(|| missing("experiment"))?;

    let k = raw.required_float("model.k")?;
    let l = raw.required_float("model.l")?;
    let sigma = raw.required_float("model.sigma")?;
    let a = raw.required_float("model.a")?;
    let x0 = raw.required_float("model.x0")?;
    let t_end = raw.float("grid.t_end")?.unwrap_or(DEFAULT_T_END);
    let n_steps: usize = raw.get("grid.n_steps")?.unwrap_or(DEFAULT_N_STEPS);
    let scheme: SchemeId = raw
        .get("experiment.scheme")?
        .unwrap_or(SchemeId::SemiDiscrete);
    let n_paths: usize = raw.get("experiment.n_paths")?.unwrap_or(DEFAULT_N_PATHS);
    let seed: u64 = raw.get("experiment.seed")?.unwrap_or(DEFAULT_SEED);
    let test_exponents = raw
        .exponents("experiment.test_exponents")?
        .unwrap_or_else(|| DEFAULT_TEST_EXPONENTS.to_vec());
    let ref_exponent: u32 = match raw.get("experiment.ref_exponent")? {
        Some(r) => r,
        None => test_exponents.iter().copied().max().unwrap_or(0) + DEFAULT_REF_GAP,
    };
    let payoff = match experiment {
        ExperimentKind::Price => {
            let kind: PayoffKind = raw
                .get("experiment.payoff")?
                .unwrap_or(PayoffKind::EuropeanCall);
            let strike = raw.required_float("experiment.strike")?;
            Some(
                PayoffSpec::new(kind, strike)
                    .map_err(|e| ConfigError::Validation(e.to_string()))?,
            )
        }
        _ => None,
    };
    let out: Option<PathBuf> = raw.get::<String>("output.path")?.map(PathBuf::from);
    let format = match raw.get::<OutputFormat>("output.format")? {
        Some(f) => f,
        None => match out.as_ref().and_then(|p| p.extension()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        },
    };

    let params =
        CevParams::new(k, l, sigma, a, x0).map_err(|e| ConfigError::Validation(e.to_string()))?;
    let grid = TimeGrid::new(t_end, n_steps).map_err(|e| ConfigError::Validation(e.to_string()))?;
    let config = RunConfig {
        experiment,
        params,
        grid,
        scheme,
        n_paths,
        seed,
        ref_exponent,
        test_exponents,
        payoff,
        format,
        out,
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    let fail = |msg: String| Err(ConfigError::Validation(msg));
    match config.experiment {
        ExperimentKind::Check => return Ok(()),
        ExperimentKind::Convergence => {
            let spec = config.level_spec();
            if let Err(e) = spec.validate() {
                return fail(e.to_string());
            }
            if let Err(e) = check_levels(&config.params, config.scheme, &spec, config.grid.t_end())
            {
                return fail(e.to_string());
            }
        }
        ExperimentKind::Negativity => {
            if let Err(e) = check_feasible(SchemeId::SemiDiscrete, &config.params, config.grid.dt())
            {
                return fail(e.to_string());
            }
        }
        ExperimentKind::Simulate | ExperimentKind::Moments | ExperimentKind::Price => {
            if let Err(e) = check_feasible(config.scheme, &config.params, config.grid.dt()) {
                return fail(e.to_string());
            }
        }
    }
    if config.n_paths == 0 {
        return fail("n_paths must be >= 1".into());
    }
    let needs_report_paths = matches!(
        config.experiment,
        ExperimentKind::Convergence | ExperimentKind::Moments | ExperimentKind::Price
    );
    if needs_report_paths && config.n_paths < MIN_REPORT_PATHS {
        return fail(format!(
            "n_paths must be >= {MIN_REPORT_PATHS} for {} reports, got {}",
            config.experiment.name(),
            config.n_paths
        ));
    }
    Ok(())
}
