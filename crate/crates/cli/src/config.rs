//! Run configuration: defaults, then a TOML file, then command-line flags.
//!
//! Tables in the file only group keys; `[model] gamma = 1` and a top-level
//! `gamma = 1` mean the same thing. Dashes in keys are read as underscores.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use skg_core::{LatticeSpec, ModelParams, SimConfig, TimeGrid};
use toml::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: String, message: String },
    Parse(String),
    UnknownKey(String),
    TypeMismatch { key: String, expected: &'static str, found: String },
    MissingRequired(String),
    DuplicateKey(String),
    Invalid { key: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read config {path}: {message}"),
            ConfigError::Parse(msg) => write!(f, "malformed config: {msg}"),
            ConfigError::UnknownKey(key) => write!(f, "unknown key `{key}`"),
            ConfigError::TypeMismatch { key, expected, found } => {
                write!(f, "key `{key}` expects {expected}, found {found}")
            }
            ConfigError::MissingRequired(key) => write!(f, "missing required key `{key}`"),
            ConfigError::DuplicateKey(key) => write!(f, "key `{key}` is set more than once"),
            ConfigError::Invalid { key, reason } => write!(f, "invalid value for `{key}`: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Real,
    Count,
    Seed,
    RealList,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Real => "a number",
            Kind::Count => "a non-negative integer",
            Kind::Seed => "an unsigned 64-bit integer",
            Kind::RealList => "a list of numbers",
        }
    }
}

const KEYS: &[(&str, Kind)] = &[
    ("gamma", Kind::Real),
    ("mu2", Kind::Real),
    ("lambda", Kind::Real),
    ("power", Kind::Count),
    ("sigma", Kind::Real),
    ("dim", Kind::Count),
    ("n_sites", Kind::Count),
    ("delta", Kind::Real),
    ("dt", Kind::Real),
    ("horizon", Kind::Real),
    ("seed", Kind::Seed),
    ("order", Kind::Count),
    ("tol", Kind::Real),
    ("max_iter", Kind::Count),
    ("record_every", Kind::Count),
    ("snapshot_times", Kind::RealList),
    ("ensemble", Kind::Count),
    ("initial_amplitude", Kind::Real),
    ("data_amplitude", Kind::Real),
];

const REQUIRED: [&str; 4] = ["gamma", "mu2", "lambda", "power"];

/// Fully resolved parameters; echoed verbatim into every manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub mu2: f64,
    pub lambda: f64,
    pub power: u32,
    pub sigma: f64,
    pub dim: usize,
    pub n_sites: usize,
    pub delta: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub order: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub record_every: usize,
    pub snapshot_times: Vec<f64>,
    pub ensemble: usize,
    pub initial_amplitude: f64,
    /// Standard deviation of the random initial data `f`, `g` for solve/perturb/trees.
    pub data_amplitude: f64,
}

impl RunConfig {
    pub fn spec(&self) -> Result<LatticeSpec, ConfigError> {
        LatticeSpec::new(self.dim, self.n_sites, self.delta).map_err(|e| invalid("n_sites", e))
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        ModelParams::new(self.gamma, self.mu2, self.lambda, self.power, self.sigma).map_err(|e| invalid("model", e))
    }

    pub fn grid(&self) -> Result<TimeGrid, ConfigError> {
        TimeGrid::from_horizon(self.horizon, self.dt).map_err(|e| invalid("horizon", e))
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let mut cfg = SimConfig::new(self.spec()?, self.params()?, self.dt, self.horizon, self.seed);
        cfg.record_every = self.record_every;
        cfg.snapshot_times = self.snapshot_times.clone();
        cfg.ensemble = self.ensemble;
        cfg.initial_amplitude = self.initial_amplitude;
        cfg.validate().map_err(|e| invalid("simulate", e))?;
        Ok(cfg)
    }
}

fn invalid(key: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.to_string() }
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

fn describe(value: &Value) -> String {
    match value {
        Value::String(s) => format!("string {s:?}"),
        Value::Integer(i) => format!("integer {i}"),
        Value::Float(x) => format!("float {x}"),
        Value::Boolean(b) => format!("boolean {b}"),
        Value::Datetime(d) => format!("datetime {d}"),
        Value::Array(_) => "array".into(),
        Value::Table(_) => "table".into(),
    }
}

/// Reads a config file into flat `key -> value` pairs.
pub fn read_file(path: &Path) -> Result<BTreeMap<String, Value>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    flatten_text(&text)
}

pub fn flatten_text(text: &str) -> Result<BTreeMap<String, Value>, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    let mut flat = BTreeMap::new();
    flatten_into(&table, &mut flat)?;
    Ok(flat)
}

fn flatten_into(table: &toml::Table, out: &mut BTreeMap<String, Value>) -> Result<(), ConfigError> {
    for (key, value) in table {
        match value {
            Value::Table(inner) => flatten_into(inner, out)?,
            other => {
                let key = normalize(key);
                if out.insert(key.clone(), other.clone()).is_some() {
                    return Err(ConfigError::DuplicateKey(key));
                }
            }
        }
    }
    Ok(())
}

fn as_real(key: &str, value: &Value) -> Result<f64, ConfigError> {
    match value {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(mismatch(key, Kind::Real, other)),
    }
}

fn mismatch(key: &str, kind: Kind, value: &Value) -> ConfigError {
    ConfigError::TypeMismatch { key: key.into(), expected: kind.describe(), found: describe(value) }
}

fn check_value(key: &str, kind: Kind, value: &Value) -> Result<(), ConfigError> {
    match kind {
        Kind::Real => as_real(key, value).map(|_| ()),
        Kind::Count | Kind::Seed => match value {
            Value::Integer(i) if *i >= 0 => Ok(()),
            other => Err(mismatch(key, kind, other)),
        },
        Kind::RealList => match value {
            Value::Array(items) => items.iter().try_for_each(|v| as_real(key, v).map(|_| ())),
            other => Err(mismatch(key, kind, other)),
        },
    }
}

/// Merges the file (if any) with flag overrides and resolves every parameter.
pub fn parse_config(path: Option<&Path>, overrides: &BTreeMap<String, Value>) -> Result<RunConfig, ConfigError> {
    parse_config_with_base(&BTreeMap::new(), path, overrides)
}

/// As [`parse_config`], with `base` values below the file in precedence.
pub fn parse_config_with_base(
    base: &BTreeMap<String, Value>,
    path: Option<&Path>,
    overrides: &BTreeMap<String, Value>,
) -> Result<RunConfig, ConfigError> {
    let mut merged = base.clone();
    if let Some(p) = path {
        merged.extend(read_file(p)?);
    }
    for (k, v) in overrides {
        merged.insert(normalize(k), v.clone());
    }
    resolve(&merged)
}

pub fn resolve(values: &BTreeMap<String, Value>) -> Result<RunConfig, ConfigError> {
    for (key, value) in values {
        let kind = kind_of(key).ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
        check_value(key, kind, value)?;
    }
    for key in REQUIRED {
        if !values.contains_key(key) {
            return Err(ConfigError::MissingRequired(key.into()));
        }
    }
    let real = |key: &str, default: f64| values.get(key).map_or(Ok(default), |v| as_real(key, v));
    let count = |key: &str, default: usize| -> Result<usize, ConfigError> {
        match values.get(key) {
            Some(Value::Integer(i)) => usize::try_from(*i).map_err(|_| invalid(key, "out of range")),
            _ => Ok(default),
        }
    };
    let power = count("power", 0)?;
    let power = u32::try_from(power).map_err(|_| invalid("power", "out of range"))?;
    if power < 1 {
        return Err(invalid("power", "must be at least 1"));
    }
    let seed = match values.get("seed") {
        Some(Value::Integer(i)) => *i as u64,
        _ => 0,
    };
    let snapshot_times = match values.get("snapshot_times") {
        Some(Value::Array(items)) => items.iter().map(|v| as_real("snapshot_times", v)).collect::<Result<_, _>>()?,
        _ => Vec::new(),
    };
    let cfg = RunConfig {
        gamma: real("gamma", 0.0)?,
        mu2: real("mu2", 0.0)?,
        lambda: real("lambda", 0.0)?,
        power,
        sigma: real("sigma", 0.0)?,
        dim: count("dim", 1)?,
        n_sites: count("n_sites", 16)?,
        delta: real("delta", 1.0)?,
        dt: real("dt", 0.01)?,
        horizon: real("horizon", 1.0)?,
        seed,
        order: count("order", 2)?,
        tol: real("tol", 1e-12)?,
        max_iter: count("max_iter", 200)?,
        record_every: count("record_every", 1)?,
        snapshot_times,
        ensemble: count("ensemble", 1)?,
        initial_amplitude: real("initial_amplitude", skg_core::simulator::DEFAULT_INITIAL_AMPLITUDE)?,
        data_amplitude: real("data_amplitude", 0.1)?,
    };
    cfg.spec()?;
    cfg.params()?;
    cfg.grid()?;
    if !(cfg.tol.is_finite() && cfg.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if !(cfg.data_amplitude.is_finite() && cfg.data_amplitude >= 0.0) {
        return Err(invalid("data_amplitude", "must be non-negative"));
    }
    Ok(cfg)
}
