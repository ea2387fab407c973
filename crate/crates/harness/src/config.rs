//! Experiment configuration: a strict TOML dialect.
//!
//! ```toml
//! experiment = "mse_vs_snr"
//! seed = 7
//! num_trials = 20
//! output = "results/mse.csv"
//!
//! [parameters]
//! snr_db = [0.0, 10.0, 20.0]   # arrays are sweep axes
//! policy = "threshold_optimal"
//! ```
//!
//! Unknown keys, wrong types and missing required parameters are rejected
//! with the offending key and line. Parameters left out fall back to their
//! defaults, which are recorded in [`ExperimentConfig::defaulted`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::de::{DeTable, DeValue};
use toml::Spanned;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "AIRCOMP_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("{}: `{key}` expects {expected}", line_label(*line))]
    TypeMismatch {
        key: String,
        line: Option<usize>,
        expected: String,
    },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("{}: `{key}`: {message}", line_label(*line))]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
}

fn line_label(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}"),
        None => "override".to_string(),
    }
}

impl ConfigError {
    /// The key the error is about, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. }
            | ConfigError::TypeMismatch { key, .. }
            | ConfigError::MissingKey { key }
            | ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Ident(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(r) => Some(*r),
            ParamValue::Ident(_) => None,
        }
    }

    /// TOML literal for this value.
    pub fn to_toml(&self) -> String {
        match self {
            ParamValue::Int(i) => i.to_string(),
            ParamValue::Real(r) => real_literal(*r),
            ParamValue::Ident(s) => format!("{s:?}"),
        }
    }
}

/// Text form used in exports: integers plain, reals in shortest round-trip
/// form (always with a `.` or exponent), identifiers verbatim.
impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(r) => write!(f, "{r:?}"),
            ParamValue::Ident(s) => f.write_str(s),
        }
    }
}

impl FromStr for ParamValue {
    type Err = std::convert::Infallible;

    /// Inverse of `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(i) = s.parse::<i64>() {
            return Ok(ParamValue::Int(i));
        }
        match s.parse::<f64>() {
            Ok(r) => Ok(ParamValue::Real(r)),
            Err(_) => Ok(ParamValue::Ident(s.to_string())),
        }
    }
}

fn real_literal(r: f64) -> String {
    if r.is_nan() {
        "nan".into()
    } else if r.is_infinite() {
        if r > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{r:?}")
    }
}

/// A parameter is either fixed or swept over a list of values.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSetting {
    Single(ParamValue),
    Sweep(Vec<ParamValue>),
}

impl ParamSetting {
    pub fn values(&self) -> &[ParamValue] {
        match self {
            ParamSetting::Single(v) => std::slice::from_ref(v),
            ParamSetting::Sweep(v) => v,
        }
    }

    fn to_toml(&self) -> String {
        match self {
            ParamSetting::Single(v) => v.to_toml(),
            ParamSetting::Sweep(v) => {
                let items: Vec<String> = v.iter().map(ParamValue::to_toml).collect();
                format!("[{}]", items.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Int,
    Real,
    Ident,
}

impl ParamType {
    fn describe(self) -> &'static str {
        match self {
            ParamType::Int => "an integer",
            ParamType::Real => "a number",
            ParamType::Ident => "an identifier string",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DefaultValue {
    Required,
    Int(i64),
    Real(f64),
    Ident(&'static str),
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub ty: ParamType,
    pub default: DefaultValue,
    /// Inclusive bounds for numbers.
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Permitted identifiers.
    pub choices: &'static [&'static str],
    pub help: &'static str,
}

const fn int(name: &'static str, default: i64, min: i64, help: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        ty: ParamType::Int,
        default: DefaultValue::Int(default),
        min: Some(min as f64),
        max: None,
        choices: &[],
        help,
    }
}

const fn real(name: &'static str, default: f64, min: Option<f64>, help: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        ty: ParamType::Real,
        default: DefaultValue::Real(default),
        min,
        max: None,
        choices: &[],
        help,
    }
}

const fn ident(
    name: &'static str,
    default: &'static str,
    choices: &'static [&'static str],
    help: &'static str,
) -> ParamSpec {
    ParamSpec {
        name,
        ty: ParamType::Ident,
        default: DefaultValue::Ident(default),
        min: None,
        max: None,
        choices,
        help,
    }
}

const fn required(spec: ParamSpec) -> ParamSpec {
    ParamSpec {
        default: DefaultValue::Required,
        ..spec
    }
}

const POLICIES: &[&str] = &["uniform_inversion", "truncated_inversion", "threshold_optimal"];
const MODES: &[&str] = &["ideal", "analog_aircomp", "one_bit_aircomp", "ofdma"];

const POWER: ParamSpec = real("power_budget", 1.0, Some(f64::MIN_POSITIVE), "per-device transmit power budget P");
const TRUNCATION: ParamSpec = real("truncation_threshold", 0.1, Some(0.0), "truncated-inversion threshold on |h|^2");

const MSE_VS_SNR: &[ParamSpec] = &[
    required(real("snr_db", 10.0, None, "P / noise variance, in dB")),
    int("num_devices", 10, 1, "number of devices K"),
    POWER,
    ident("policy", "threshold_optimal", POLICIES, "power-control policy"),
    TRUNCATION,
    int("mc_rounds", 0, 0, "Monte-Carlo rounds for an empirical MSE column; 0 skips it"),
];

const POLICY_COMPARISON: &[ParamSpec] = &[
    int("num_devices", 10, 1, "number of devices K"),
    real("snr_db", 10.0, None, "P / noise variance, in dB"),
    POWER,
    TRUNCATION,
];

const MIMO_BEAMFORMER: &[ParamSpec] = &[
    int("num_devices", 8, 1, "number of devices K"),
    int("num_antennas", 4, 1, "server antennas N"),
    real("snr_db", 10.0, None, "P / noise variance, in dB"),
    POWER,
    int("restarts", 8, 1, "local-search restarts"),
];

const LATENCY_VS_DEVICES: &[ParamSpec] = &[
    required(int("num_devices", 10, 1, "number of devices K")),
    int("model_dim", 10_000, 1, "parameters per model update"),
    int("num_subchannels", 1000, 1, "orthogonal sub-channels S"),
    int("bits_per_parameter", 16, 1, "OFDMA quantization bits"),
    real("target_ber", 1e-3, Some(f64::MIN_POSITIVE), "OFDMA target bit error rate"),
    real("mean_snr_db", 20.0, None, "mean receive SNR for adaptive QAM, in dB"),
    real("symbol_duration_us", 0.0, Some(0.0), "slot length for a millisecond column; 0 omits it"),
];

const FEDERATED: &[ParamSpec] = &[
    int("num_devices", 20, 1, "number of devices K"),
    int("rounds", 100, 1, "training rounds"),
    ident("aggregation_mode", "analog_aircomp", MODES, "gradient aggregation scheme"),
    real("learning_rate", 0.5, Some(f64::MIN_POSITIVE), "server step for averaged gradients"),
    real("sign_step_size", 0.01, Some(f64::MIN_POSITIVE), "server step for one-bit sign updates"),
    real("snr_db", 10.0, None, "P / noise variance, in dB; inf for a noiseless channel"),
    POWER,
    TRUNCATION,
    int("num_features", 10, 1, "feature dimension of the synthetic task"),
    int("samples_per_device", 50, 1, "local training samples"),
    int("test_samples", 2000, 1, "held-out samples"),
    real("separation", 3.0, Some(0.0), "distance between the two class means"),
    int("num_subchannels", 1000, 1, "orthogonal sub-channels S"),
    int("bits_per_parameter", 16, 1, "OFDMA quantization bits"),
    real("target_ber", 1e-3, Some(f64::MIN_POSITIVE), "OFDMA target bit error rate"),
    real("mean_snr_db", 20.0, None, "mean receive SNR for adaptive QAM, in dB"),
];

const CONSENSUS: &[ParamSpec] = &[
    int("num_agents", 10, 2, "number of agents"),
    int("rounds", 100, 0, "consensus rounds"),
    ParamSpec {
        max: Some(1.0),
        ..real("step_size", 0.5, Some(f64::MIN_POSITIVE), "update weight toward the peer average, in (0, 1]")
    },
    real("noise_std", 0.0, Some(0.0), "receiver noise standard deviation"),
    real("initial_spread", 1.0, Some(0.0), "initial states are uniform on [-spread, spread]"),
    ident("fading", "aligned", &["aligned", "rayleigh"], "peer channels: perfectly aligned or Rayleigh with inversion"),
];

const SENSING: &[ParamSpec] = &[
    int("num_sensors", 20, 1, "number of sensors"),
    real("field_value", 25.0, None, "true value of the monitored field"),
    real("measurement_noise_std", 0.5, Some(0.0), "sensor noise standard deviation"),
    ident(
        "function",
        "arithmetic_mean",
        &["arithmetic_mean", "geometric_mean", "euclidean_norm", "soft_max"],
        "aggregated function",
    ),
    real("beta", 10.0, Some(f64::MIN_POSITIVE), "soft-max sharpness"),
    real("snr_db", 10.0, None, "P / noise variance, in dB"),
    POWER,
    ident("policy", "threshold_optimal", POLICIES, "power-control policy"),
    TRUNCATION,
    int("rounds", 100, 1, "aggregation rounds averaged per trial"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    MseVsSnr,
    PolicyComparison,
    MimoBeamformer,
    LatencyVsDevices,
    Federated,
    Consensus,
    Sensing,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::MseVsSnr,
        ExperimentKind::PolicyComparison,
        ExperimentKind::MimoBeamformer,
        ExperimentKind::LatencyVsDevices,
        ExperimentKind::Federated,
        ExperimentKind::Consensus,
        ExperimentKind::Sensing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MseVsSnr => "mse_vs_snr",
            ExperimentKind::PolicyComparison => "policy_comparison",
            ExperimentKind::MimoBeamformer => "mimo_beamformer",
            ExperimentKind::LatencyVsDevices => "latency_vs_devices",
            ExperimentKind::Federated => "federated",
            ExperimentKind::Consensus => "consensus",
            ExperimentKind::Sensing => "sensing",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::MseVsSnr => "closed-form (and optionally Monte-Carlo) MSE of one policy",
            ExperimentKind::PolicyComparison => "MSE of all scalar policies on common channels",
            ExperimentKind::MimoBeamformer => "heuristic vs local-search aggregation beamforming",
            ExperimentKind::LatencyVsDevices => "per-round uplink latency of AirComp and OFDMA",
            ExperimentKind::Federated => "federated training on a synthetic two-class task",
            ExperimentKind::Consensus => "average consensus over a complete graph",
            ExperimentKind::Sensing => "distributed sensing with a nomographic target",
        }
    }

    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            ExperimentKind::MseVsSnr => MSE_VS_SNR,
            ExperimentKind::PolicyComparison => POLICY_COMPARISON,
            ExperimentKind::MimoBeamformer => MIMO_BEAMFORMER,
            ExperimentKind::LatencyVsDevices => LATENCY_VS_DEVICES,
            ExperimentKind::Federated => FEDERATED,
            ExperimentKind::Consensus => CONSENSUS,
            ExperimentKind::Sensing => SENSING,
        }
    }

    fn spec(self, name: &str) -> Option<&'static ParamSpec> {
        self.params().iter().find(|p| p.name == name)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Every parameter of `kind`, defaults included.
    pub parameters: BTreeMap<String, ParamSetting>,
    /// Parameters that were not given and took their default.
    pub defaulted: BTreeSet<String>,
    pub seed: u64,
    pub num_trials: usize,
    pub output_path: PathBuf,
}

const TOP_KEYS: &[&str] = &["experiment", "seed", "num_trials", "output", "parameters"];

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, offset: usize) -> usize {
        self.0.as_bytes()[..offset.min(self.0.len())]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1
    }
}

type Entry<'a, 'i> = (&'a Spanned<std::borrow::Cow<'i, str>>, &'a Spanned<DeValue<'i>>);

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let lines = Lines(text);
    let root = DeTable::parse(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map_or(1, |s| lines.of(s.start)),
        message: e.message().to_string(),
    })?;
    let root = root.get_ref();

    for (key, _) in root.iter() {
        if !TOP_KEYS.contains(&key.get_ref().as_ref()) {
            return Err(ConfigError::UnknownKey {
                key: key.get_ref().to_string(),
                line: lines.of(key.span().start),
            });
        }
    }
    let find = |name: &str| -> Option<Entry<'_, '_>> { root.iter().find(|(k, _)| k.get_ref() == name) };

    let (_, kind_value) = find("experiment").ok_or(ConfigError::MissingKey {
        key: "experiment".into(),
    })?;
    let kind_line = lines.of(kind_value.span().start);
    let kind: ExperimentKind = kind_value
        .get_ref()
        .as_str()
        .ok_or_else(|| ConfigError::TypeMismatch {
            key: "experiment".into(),
            line: Some(kind_line),
            expected: "an experiment name".into(),
        })?
        .parse()
        .map_err(|message| ConfigError::Invalid {
            key: "experiment".into(),
            line: Some(kind_line),
            message,
        })?;

    let seed = match find("seed") {
        Some((_, v)) => v
            .get_ref()
            .as_integer()
            .and_then(|i| u64::from_str_radix(i.as_str(), i.radix()).ok())
            .ok_or_else(|| ConfigError::TypeMismatch {
                key: "seed".into(),
                line: Some(lines.of(v.span().start)),
                expected: "an integer in [0, 2^64)".into(),
            })?,
        None => return Err(ConfigError::MissingKey { key: "seed".into() }),
    };
    let num_trials = match find("num_trials") {
        Some((_, v)) => {
            let line = lines.of(v.span().start);
            let i = integer(v.get_ref(), "num_trials", line)?;
            positive_count(i, "num_trials", Some(line))?
        }
        None => 1,
    };
    let output_path = match find("output") {
        Some((_, v)) => PathBuf::from(v.get_ref().as_str().ok_or_else(|| ConfigError::TypeMismatch {
            key: "output".into(),
            line: Some(lines.of(v.span().start)),
            expected: "a path string".into(),
        })?),
        None => PathBuf::from(format!("{}.csv", kind.name())),
    };

    let mut given = BTreeMap::new();
    if let Some((key, table)) = find("parameters") {
        let table = table.get_ref().as_table().ok_or_else(|| ConfigError::TypeMismatch {
            key: "parameters".into(),
            line: Some(lines.of(key.span().start)),
            expected: "a table".into(),
        })?;
        for (k, v) in table.iter() {
            let name = k.get_ref().as_ref();
            let line = lines.of(k.span().start);
            let spec = kind.spec(name).ok_or_else(|| ConfigError::UnknownKey {
                key: name.to_string(),
                line,
            })?;
            given.insert(name.to_string(), setting_from_toml(spec, v.get_ref(), Some(line))?);
        }
    }
    ExperimentConfig::assemble(kind, given, seed, num_trials, output_path)
}

fn integer(value: &DeValue<'_>, key: &str, line: usize) -> Result<i64, ConfigError> {
    value
        .as_integer()
        .and_then(|i| i64::from_str_radix(i.as_str(), i.radix()).ok())
        .ok_or_else(|| ConfigError::TypeMismatch {
            key: key.into(),
            line: Some(line),
            expected: "an integer".into(),
        })
}

fn positive_count(i: i64, key: &str, line: Option<usize>) -> Result<usize, ConfigError> {
    usize::try_from(i).ok().filter(|&n| n >= 1).ok_or_else(|| ConfigError::Invalid {
        key: key.into(),
        line,
        message: "must be at least 1".into(),
    })
}

fn setting_from_toml(spec: &ParamSpec, value: &DeValue<'_>, line: Option<usize>) -> Result<ParamSetting, ConfigError> {
    if let Some(items) = value.as_array() {
        if items.is_empty() {
            return Err(ConfigError::Invalid {
                key: spec.name.into(),
                line,
                message: "sweep list is empty".into(),
            });
        }
        let values = items
            .iter()
            .map(|v| scalar_from_toml(spec, v.get_ref(), line))
            .collect::<Result<_, _>>()?;
        return Ok(ParamSetting::Sweep(values));
    }
    scalar_from_toml(spec, value, line).map(ParamSetting::Single)
}

fn scalar_from_toml(spec: &ParamSpec, value: &DeValue<'_>, line: Option<usize>) -> Result<ParamValue, ConfigError> {
    let mismatch = || ConfigError::TypeMismatch {
        key: spec.name.into(),
        line,
        expected: spec.ty.describe().into(),
    };
    let v = match (spec.ty, value) {
        (ParamType::Int, DeValue::Integer(i)) => {
            ParamValue::Int(i64::from_str_radix(i.as_str(), i.radix()).map_err(|_| mismatch())?)
        }
        (ParamType::Real, DeValue::Integer(i)) => {
            ParamValue::Real(i64::from_str_radix(i.as_str(), i.radix()).map_err(|_| mismatch())? as f64)
        }
        (ParamType::Real, DeValue::Float(f)) => ParamValue::Real(f.as_str().parse().map_err(|_| mismatch())?),
        (ParamType::Ident, DeValue::String(s)) => ParamValue::Ident(s.to_string()),
        _ => return Err(mismatch()),
    };
    check_value(spec, &v, line)?;
    Ok(v)
}

fn check_value(spec: &ParamSpec, v: &ParamValue, line: Option<usize>) -> Result<(), ConfigError> {
    let invalid = |message: String| ConfigError::Invalid {
        key: spec.name.into(),
        line,
        message,
    };
    match v {
        ParamValue::Ident(s) => {
            if !spec.choices.is_empty() && !spec.choices.contains(&s.as_str()) {
                return Err(invalid(format!("`{s}` is not one of {}", spec.choices.join(", "))));
            }
        }
        ParamValue::Int(_) | ParamValue::Real(_) => {
            let x = v.as_f64().expect("numeric");
            if x.is_nan() {
                return Err(invalid("NaN is not allowed".into()));
            }
            if let Some(min) = spec.min {
                if x < min {
                    return Err(invalid(format!("{x} is below the minimum {min}")));
                }
            }
            if let Some(max) = spec.max {
                if x > max {
                    return Err(invalid(format!("{x} is above the maximum {max}")));
                }
            }
        }
    }
    Ok(())
}

fn default_value(spec: &ParamSpec) -> Option<ParamValue> {
    match spec.default {
        DefaultValue::Required => None,
        DefaultValue::Int(i) => Some(ParamValue::Int(i)),
        DefaultValue::Real(r) => Some(ParamValue::Real(r)),
        DefaultValue::Ident(s) => Some(ParamValue::Ident(s.to_string())),
    }
}

impl ExperimentConfig {
    fn assemble(
        kind: ExperimentKind,
        mut given: BTreeMap<String, ParamSetting>,
        seed: u64,
        num_trials: usize,
        output_path: PathBuf,
    ) -> Result<Self, ConfigError> {
        let mut defaulted = BTreeSet::new();
        for spec in kind.params() {
            if given.contains_key(spec.name) {
                continue;
            }
            let value = default_value(spec).ok_or_else(|| ConfigError::MissingKey {
                key: spec.name.to_string(),
            })?;
            given.insert(spec.name.to_string(), ParamSetting::Single(value));
            defaulted.insert(spec.name.to_string());
        }
        Ok(Self {
            kind,
            parameters: given,
            defaulted,
            seed,
            num_trials,
            output_path,
        })
    }

    /// Canonical TOML. Defaulted parameters are written as comments, so the
    /// text parses back to an equal config.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment = {:?}\n", self.kind.name()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("num_trials = {}\n", self.num_trials));
        out.push_str(&format!(
            "output = {}\n",
            toml_string(&self.output_path.to_string_lossy())
        ));
        out.push_str("\n[parameters]\n");
        for (name, setting) in &self.parameters {
            let comment = if self.defaulted.contains(name) { "# default: " } else { "" };
            out.push_str(&format!("{comment}{name} = {}\n", setting.to_toml()));
        }
        out
    }

    /// 64-bit content hash over the experiment, seed and resolved parameters.
    /// The trial count and output path are excluded, so extending a run or
    /// moving its output keeps the per-trial seeds.
    pub fn config_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.kind.name().as_bytes());
        h.update(b"\nseed=");
        h.update(self.seed.to_le_bytes());
        for (name, setting) in &self.parameters {
            h.update(b"\n");
            h.update(name.as_bytes());
            h.update(b"=");
            h.update(setting.to_toml().as_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Sweep axes in key order.
    pub fn sweep_axes(&self) -> Vec<(&str, &[ParamValue])> {
        self.parameters
            .iter()
            .filter_map(|(k, s)| match s {
                ParamSetting::Sweep(v) => Some((k.as_str(), v.as_slice())),
                ParamSetting::Single(_) => None,
            })
            .collect()
    }

    /// Cartesian product of the sweep axes, last axis varying fastest. A
    /// config without sweeps has one empty point.
    pub fn sweep_points(&self) -> Vec<BTreeMap<String, ParamValue>> {
        let mut points = vec![BTreeMap::new()];
        for (key, values) in self.sweep_axes() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.to_string(), v.clone());
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// Parameter values at one sweep point.
    pub fn resolve(&self, point: &BTreeMap<String, ParamValue>) -> Params {
        let values = self
            .parameters
            .iter()
            .map(|(k, s)| {
                let v = match s {
                    ParamSetting::Single(v) => v.clone(),
                    ParamSetting::Sweep(_) => point[k].clone(),
                };
                (k.clone(), v)
            })
            .collect();
        Params { values }
    }

    /// Applies `AIRCOMP_SEED`, `AIRCOMP_NUM_TRIALS`, `AIRCOMP_OUTPUT` and
    /// `AIRCOMP_PARAM_<NAME>` overrides. Parameter values use TOML syntax;
    /// identifiers may be given without quotes. Other `AIRCOMP_` variables
    /// are rejected.
    pub fn apply_env_overrides<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.as_ref().starts_with(ENV_PREFIX))
            .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
            .collect();
        vars.sort();
        for (var, raw) in vars {
            let key = &var[ENV_PREFIX.len()..];
            match key {
                "SEED" => {
                    self.seed = raw.trim().parse().map_err(|_| ConfigError::TypeMismatch {
                        key: var.clone(),
                        line: None,
                        expected: "a non-negative integer".into(),
                    })?;
                }
                "NUM_TRIALS" => {
                    let n: i64 = raw.trim().parse().map_err(|_| ConfigError::TypeMismatch {
                        key: var.clone(),
                        line: None,
                        expected: "an integer".into(),
                    })?;
                    self.num_trials = positive_count(n, &var, None)?;
                }
                "OUTPUT" => self.output_path = PathBuf::from(raw),
                _ => {
                    let name = key
                        .strip_prefix("PARAM_")
                        .map(str::to_ascii_lowercase)
                        .ok_or_else(|| ConfigError::Invalid {
                            key: var.clone(),
                            line: None,
                            message: "unrecognised override".into(),
                        })?;
                    let setting = self.parse_override(&name, &raw, &var)?;
                    self.set_parameter(&name, setting);
                }
            }
        }
        Ok(())
    }

    fn parse_override(&self, name: &str, raw: &str, var: &str) -> Result<ParamSetting, ConfigError> {
        let spec = self.kind.spec(name).ok_or_else(|| ConfigError::Invalid {
            key: var.to_string(),
            line: None,
            message: format!("`{name}` is not a parameter of {}", self.kind),
        })?;
        let trimmed = raw.trim();
        let text = if spec.ty == ParamType::Ident && !trimmed.starts_with(['"', '[']) {
            format!("v = {}", toml_string(trimmed))
        } else {
            format!("v = {trimmed}")
        };
        let table = DeTable::parse(&text).map_err(|e| ConfigError::Invalid {
            key: var.to_string(),
            line: None,
            message: e.message().to_string(),
        })?;
        let value = table.get_ref().iter().next().expect("one entry").1;
        setting_from_toml(spec, value.get_ref(), None).map_err(|e| match e {
            ConfigError::TypeMismatch { expected, .. } => ConfigError::TypeMismatch {
                key: var.to_string(),
                line: None,
                expected,
            },
            other => other,
        })
    }

    /// Replaces a parameter and clears its defaulted flag. Panics if `name`
    /// is not a parameter of this experiment.
    pub fn set_parameter(&mut self, name: &str, setting: ParamSetting) {
        assert!(self.kind.spec(name).is_some(), "unknown parameter {name}");
        self.parameters.insert(name.to_string(), setting);
        self.defaulted.remove(name);
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Parameter values at one sweep point, all keys present and type-checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    values: BTreeMap<String, ParamValue>,
}

impl Params {
    pub fn int(&self, name: &str) -> i64 {
        match &self.values[name] {
            ParamValue::Int(i) => *i,
            other => panic!("{name} is not an integer: {other:?}"),
        }
    }

    pub fn count(&self, name: &str) -> usize {
        usize::try_from(self.int(name)).expect("validated non-negative")
    }

    pub fn real(&self, name: &str) -> f64 {
        self.values[name].as_f64().unwrap_or_else(|| panic!("{name} is not numeric"))
    }

    pub fn ident(&self, name: &str) -> &str {
        match &self.values[name] {
            ParamValue::Ident(s) => s,
            other => panic!("{name} is not an identifier: {other:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "experiment = \"mse_vs_snr\"\nseed = 3\n\n[parameters]\nsnr_db = 10\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.kind, ExperimentKind::MseVsSnr);
        assert_eq!(c.num_trials, 1);
        assert_eq!(c.parameters["snr_db"], ParamSetting::Single(ParamValue::Real(10.0)));
        assert_eq!(c.parameters["num_devices"], ParamSetting::Single(ParamValue::Int(10)));
        assert!(c.defaulted.contains("policy") && !c.defaulted.contains("snr_db"));
    }

    #[test]
    fn misspelled_parameter_names_key_and_line() {
        let text = "experiment = \"mse_vs_snr\"\nseed = 3\n[parameters]\nsnr_db = 10\nnum_devcies = 5\n";
        match parse_config(text).unwrap_err() {
            ConfigError::UnknownKey { key, line } => {
                assert_eq!(key, "num_devcies");
                assert_eq!(line, 5);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_required_parameter() {
        let err = parse_config("experiment = \"mse_vs_snr\"\nseed = 1\n").unwrap_err();
        assert_eq!(err.key(), Some("snr_db"));
    }

    #[test]
    fn type_mismatch_named() {
        let text = "experiment = \"consensus\"\nseed = 1\n[parameters]\nnum_agents = 2.5\n";
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, ConfigError::TypeMismatch { line: Some(4), .. }));
        assert_eq!(err.key(), Some("num_agents"));
    }

    #[test]
    fn round_trip_preserves_config() {
        let text = "experiment = \"federated\"\nseed = 9\nnum_trials = 2\noutput = \"out/fl.jsonl\"\n\
                    [parameters]\naggregation_mode = [\"ideal\", \"one_bit_aircomp\"]\nsnr_db = inf\n";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn sweep_points_are_cartesian() {
        let text = "experiment = \"policy_comparison\"\nseed = 0\n[parameters]\nsnr_db = [0, 10]\nnum_devices = [2, 4, 8]\n";
        let c = parse_config(text).unwrap();
        let points = c.sweep_points();
        assert_eq!(points.len(), 6);
        assert_eq!(points[1]["num_devices"], ParamValue::Int(2));
        assert_eq!(points[1]["snr_db"], ParamValue::Real(10.0));
    }

    #[test]
    fn env_overrides_apply_and_reject_unknown() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.apply_env_overrides([("AIRCOMP_SEED", "11"), ("AIRCOMP_PARAM_POLICY", "uniform_inversion"), ("PATH", "x")])
            .unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.parameters["policy"], ParamSetting::Single(ParamValue::Ident("uniform_inversion".into())));
        assert!(!c.defaulted.contains("policy"));
        assert!(c.apply_env_overrides([("AIRCOMP_PARAM_NUM_DEVCIES", "3")]).is_err());
        assert!(c.apply_env_overrides([("AIRCOMP_PARAM_POLICY", "nope")]).is_err());
    }

    #[test]
    fn hash_ignores_output_and_trials() {
        let a = parse_config(MINIMAL).unwrap();
        let mut b = a.clone();
        b.num_trials = 50;
        b.output_path = "elsewhere.csv".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn display_and_parse_agree() {
        for v in [ParamValue::Int(-3), ParamValue::Real(10.0), ParamValue::Real(1e-300), ParamValue::Ident("ofdma".into())] {
            assert_eq!(v.to_string().parse::<ParamValue>().unwrap(), v);
        }
    }
}
