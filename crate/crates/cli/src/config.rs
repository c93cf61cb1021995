//! Experiment configuration documents.
//!
//! A config is a JSON object with scalar or array values. The only nested
//! objects are the `baseline` and `boost` sections, whose values are again
//! scalars or arrays. Unknown keys are rejected, and every error names the
//! key it concerns.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use seboost::{BoostConfig, CgConfig, Method};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: expected {expected}")]
    Type { key: String, expected: &'static str },
    #[error("key `{key}`: {reason}")]
    Range { key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Regression,
    Autoencoder,
    SweepEll,
    SweepM,
    SweepLr,
    EnrichmentStudy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Regression => "regression",
            ExperimentKind::Autoencoder => "autoencoder",
            ExperimentKind::SweepEll => "sweep_ell",
            ExperimentKind::SweepM => "sweep_M",
            ExperimentKind::SweepLr => "sweep_lr",
            ExperimentKind::EnrichmentStudy => "enrichment_study",
        }
    }

    pub fn uses_mnist(self) -> bool {
        self != ExperimentKind::Regression
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "regression" => ExperimentKind::Regression,
            "autoencoder" => ExperimentKind::Autoencoder,
            "sweep_ell" => ExperimentKind::SweepEll,
            "sweep_M" | "sweep_m" => ExperimentKind::SweepM,
            "sweep_lr" => ExperimentKind::SweepLr,
            "enrichment_study" => ExperimentKind::EnrichmentStudy,
            _ => return Err(()),
        })
    }
}

/// Autoencoder network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// 784 -> 64 -> 784
    Small,
    /// 784 -> 200 -> 100 -> 64 -> 100 -> 200 -> 784
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSection {
    /// Restrict the run to one method; `None` runs the experiment's default set.
    pub method: Option<Method>,
    /// Overrides the per-method preset learning rates.
    pub lr: Option<f64>,
    pub momentum: f64,
    /// `None` uses the preset: dampening equal to the momentum for SGD
    /// (Torch7 `optim.sgd`), none for NAG.
    pub dampening: Option<f64>,
    pub adagrad_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub train_size: usize,
    pub test_size: usize,
    pub data_seed: u64,
    pub mnist_path: PathBuf,
    pub architecture: Architecture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub baseline: BaselineSection,
    /// Template for every cell; `seed` and `boosting_enabled` are set per cell.
    pub boost: BoostConfig,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Values swept by the `sweep_*` experiments.
    pub sweep: Vec<f64>,
    pub data: DataSection,
}

pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;
pub const DEFAULT_MNIST_PATH: &str = "data/mnist/digits-images-idx3-ubyte.gz";
pub const DEFAULT_ANCHOR_PERIODS: [usize; 5] = [500, 250, 100, 50, 20];

fn type_err(key: &str, expected: &'static str) -> ConfigError {
    ConfigError::Type {
        key: key.to_string(),
        expected,
    }
}

fn range_err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64().ok_or_else(|| type_err(key, "a number"))
}

fn as_count(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Number(n) => n.as_u64().ok_or_else(|| range_err(key, format!("must be a non-negative integer, got {n}"))),
        _ => Err(type_err(key, "an integer")),
    }
}

fn as_positive(key: &str, v: &Value) -> Result<usize, ConfigError> {
    match as_count(key, v)? {
        0 => Err(range_err(key, "must be at least 1, got 0")),
        n => usize::try_from(n).map_err(|_| range_err(key, "is too large")),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| type_err(key, "true or false"))
}

fn as_str<'v>(key: &str, v: &'v Value) -> Result<&'v str, ConfigError> {
    v.as_str().ok_or_else(|| type_err(key, "a string"))
}

fn as_array<'v>(key: &str, v: &'v Value) -> Result<&'v Vec<Value>, ConfigError> {
    v.as_array().ok_or_else(|| type_err(key, "an array"))
}

fn positive_real(key: &str, v: &Value) -> Result<f64, ConfigError> {
    let x = as_f64(key, v)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(range_err(key, format!("must be positive, got {x}")));
    }
    Ok(x)
}

fn unit_interval(key: &str, v: &Value) -> Result<f64, ConfigError> {
    let x = as_f64(key, v)?;
    if !(0.0..1.0).contains(&x) {
        return Err(range_err(key, format!("must lie in [0, 1), got {x}")));
    }
    Ok(x)
}

fn section<'v>(key: &str, v: &'v Value) -> Result<&'v Map<String, Value>, ConfigError> {
    let map = v.as_object().ok_or_else(|| type_err(key, "an object"))?;
    for (k, inner) in map {
        if inner.is_object() {
            return Err(type_err(&format!("{key}.{k}"), "a string, number, bool or array"));
        }
    }
    Ok(map)
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let root = root
        .as_object()
        .ok_or_else(|| ConfigError::Malformed("top level must be a JSON object".into()))?;

    let mut experiment = None;
    let mut baseline = BaselineSection {
        method: None,
        lr: None,
        momentum: seboost::BaselineConfig::DEFAULT_MOMENTUM,
        dampening: None,
        adagrad_epsilon: seboost::BaselineConfig::DEFAULT_ADAGRAD_EPSILON,
    };
    let mut boost_keys: Option<&Map<String, Value>> = None;
    let mut weight_decay = DEFAULT_WEIGHT_DECAY;
    let mut epochs = None;
    let mut seeds = vec![1];
    let mut output_dir = PathBuf::from("results");
    let mut sweep = None;
    let mut train_size = None;
    let mut test_size = None;
    let mut data_seed = 0;
    let mut mnist_path = PathBuf::from(DEFAULT_MNIST_PATH);
    let mut architecture = Architecture::Small;

    for (key, v) in root {
        match key.as_str() {
            "experiment" => {
                let name = as_str(key, v)?;
                experiment = Some(
                    name.parse::<ExperimentKind>()
                        .map_err(|_| range_err(key, format!("unknown experiment `{name}`")))?,
                );
            }
            "baseline" => {
                for (k, v) in section(key, v)? {
                    let full = format!("baseline.{k}");
                    match k.as_str() {
                        "method" => {
                            let m = as_str(&full, v)?;
                            baseline.method = Some(m.parse().map_err(|_| range_err(&full, format!("unknown method `{m}`")))?);
                        }
                        "lr" => baseline.lr = Some(positive_real(&full, v)?),
                        "momentum" => baseline.momentum = unit_interval(&full, v)?,
                        "dampening" => baseline.dampening = Some(unit_interval(&full, v)?),
                        "adagrad_epsilon" => baseline.adagrad_epsilon = positive_real(&full, v)?,
                        _ => return Err(ConfigError::UnknownKey(full)),
                    }
                }
            }
            "boost" => boost_keys = Some(section(key, v)?),
            "weight_decay" => {
                weight_decay = as_f64(key, v)?;
                if !(weight_decay.is_finite() && weight_decay >= 0.0) {
                    return Err(range_err(key, format!("must be non-negative, got {weight_decay}")));
                }
            }
            "epochs" => epochs = Some(as_positive(key, v)?),
            "seeds" => {
                let arr = as_array(key, v)?;
                if arr.is_empty() {
                    return Err(range_err(key, "needs at least one seed"));
                }
                seeds = arr.iter().map(|s| as_count(key, s)).collect::<Result<_, _>>()?;
            }
            "output_dir" => output_dir = PathBuf::from(as_str(key, v)?),
            "sweep" => {
                let arr = as_array(key, v)?;
                if arr.is_empty() {
                    return Err(range_err(key, "needs at least one value"));
                }
                sweep = Some(arr.iter().map(|s| positive_real(key, s)).collect::<Result<Vec<_>, _>>()?);
            }
            "train_size" => train_size = Some(as_positive(key, v)?),
            "test_size" => test_size = Some(as_positive(key, v)?),
            "data_seed" => data_seed = as_count(key, v)?,
            "mnist_path" => mnist_path = PathBuf::from(as_str(key, v)?),
            "architecture" => {
                architecture = match as_str(key, v)? {
                    "small" => Architecture::Small,
                    "full" => Architecture::Full,
                    other => return Err(range_err(key, format!("expected `small` or `full`, got `{other}`"))),
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.clone())),
        }
    }

    // boost keys are checked before the experiment so range errors surface first
    let mut boost = preset_boost(experiment.unwrap_or(ExperimentKind::Autoencoder));
    if let Some(keys) = boost_keys {
        apply_boost_keys(&mut boost, keys)?;
    }
    let experiment = experiment.ok_or_else(|| ConfigError::Missing("experiment".into()))?;
    let (default_train, default_test) = if experiment.uses_mnist() { (6000, 1000) } else { (18000, 2000) };
    let data = DataSection {
        train_size: train_size.unwrap_or(default_train),
        test_size: test_size.unwrap_or(default_test),
        data_seed,
        mnist_path,
        architecture,
    };
    for (key, size) in [
        ("boost.subspace_batch_size", boost.subspace_batch_size),
        ("boost.baseline_batch_size", boost.baseline_batch_size),
    ] {
        if size > data.train_size {
            return Err(range_err(key, format!("{size} exceeds train_size {}", data.train_size)));
        }
    }
    let sweep = match sweep {
        Some(values) => {
            if matches!(experiment, ExperimentKind::SweepEll | ExperimentKind::SweepM)
                && values.iter().any(|v| v.fract() != 0.0)
            {
                return Err(range_err("sweep", format!("{experiment} sweeps need integer values")));
            }
            values
        }
        None => default_sweep(experiment),
    };

    Ok(ExperimentConfig {
        experiment,
        baseline,
        boost,
        weight_decay,
        epochs: epochs.unwrap_or(if experiment.uses_mnist() { 17 } else { 20 }),
        seeds,
        output_dir,
        sweep,
        data,
    })
}

/// Boost defaults: the general protocol, with the regression experiment's
/// own `M`, `ell` and CG budget.
fn preset_boost(kind: ExperimentKind) -> BoostConfig {
    let base = BoostConfig::default();
    match kind {
        ExperimentKind::Regression => BoostConfig {
            ell: 100,
            max_directions: 50,
            cg: CgConfig::default().with_max_evals(50),
            ..base
        },
        _ => base,
    }
}

fn default_sweep(kind: ExperimentKind) -> Vec<f64> {
    match kind {
        ExperimentKind::SweepEll => vec![50.0, 100.0, 200.0, 500.0],
        ExperimentKind::SweepM => vec![5.0, 10.0, 20.0, 50.0],
        ExperimentKind::SweepLr => vec![0.05, 0.1, 0.5],
        _ => Vec::new(),
    }
}

fn apply_boost_keys(boost: &mut BoostConfig, keys: &Map<String, Value>) -> Result<(), ConfigError> {
    for (k, v) in keys {
        let key = format!("boost.{k}");
        let key = key.as_str();
        match k.as_str() {
            "ell" => boost.ell = as_positive(key, v)?,
            "M" => boost.max_directions = as_positive(key, v)?,
            "cg_evals" => {
                boost.cg.max_evals = as_positive(key, v)?;
                if boost.cg.max_evals < 2 {
                    return Err(range_err(key, "must be at least 2"));
                }
            }
            "subspace_batch_size" => boost.subspace_batch_size = as_positive(key, v)?,
            "baseline_batch_size" => boost.baseline_batch_size = as_positive(key, v)?,
            "enrich_gradient" => boost.enrich_gradient = as_bool(key, v)?,
            "momentum" => {
                boost.enrich_momentum = match v {
                    Value::Bool(false) => None,
                    _ => Some(unit_interval(key, v)?),
                }
            }
            "anchor_periods" => {
                boost.anchor_periods = as_array(key, v)?.iter().map(|p| as_positive(key, p)).collect::<Result<_, _>>()?;
            }
            "enabled" => boost.boosting_enabled = as_bool(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
    }
    Ok(())
}
