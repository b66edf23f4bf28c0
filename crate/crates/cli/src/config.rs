//! Experiment configuration files and their kind-specific parameters.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use num_rational::BigRational;
use plab_core::coarse::MapSpec;
use plab_core::parse_rational;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

/// Seed used when a config does not name one.
pub const DEFAULT_SEED: u64 = 20_240_601;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Emx,
    Coarse,
    Compress,
    Quantum,
    FeasibleLp,
    FeasibleSdp,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            parameters: Map::new(),
            seed: DEFAULT_SEED,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow!("schema error: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Sets `key` unless `value` is null.
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        let value = value.into();
        if !value.is_null() {
            self.parameters.insert(key.to_string(), value);
        }
    }

    /// Parameters decoded into the kind's schema.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P> {
        serde_json::from_value(Value::Object(self.parameters.clone()))
            .map_err(|e| anyhow!("schema error in {} parameters: {e}", self.kind))
    }
}

/// A rational given either as a string (`"1/3"`) or a JSON number.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational(pub BigRational);

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&plab_core::prob::format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = match Value::deserialize(d)? {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            other => return Err(serde::de::Error::custom(format!("expected a rational, got {other}"))),
        };
        parse_rational(&text).map(Rational).map_err(serde::de::Error::custom)
    }
}

fn default_trials() -> usize {
    10_000
}

fn default_atoms() -> usize {
    200
}

fn default_max_weight() -> u32 {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmxParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Distribution file `{labels, weights}`; label order is the index order.
    pub dist: PathBuf,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Sample size; defaults to the quantile sample complexity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_d: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseParams {
    /// Uniform binning precision; shorthand for `map: {kind: uniform_bins}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Distribution file; labels are points in `[0, 1]` for uniform bins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<PathBuf>,
    /// Random atoms used when no file is given.
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    #[serde(default = "default_max_weight")]
    pub max_weight: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_bits: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressMode {
    Demo,
    Lemma1,
}

fn default_demo_domain() -> Vec<String> {
    (1..=8).map(|i| format!("x{i}")).collect()
}

fn default_demo_tuple() -> Vec<String> {
    ["x3", "x7", "x2", "x5"].map(String::from).to_vec()
}

fn default_m() -> usize {
    1
}

fn default_learner_d() -> usize {
    2
}

fn default_compress_trials() -> usize {
    200
}

fn default_domain_size() -> usize {
    20
}

fn third() -> f64 {
    1.0 / 3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressParams {
    pub mode: CompressMode,
    /// Demo: ordered domain and the tuple to compress.
    #[serde(default = "default_demo_domain")]
    pub domain: Vec<String>,
    #[serde(default = "default_demo_tuple")]
    pub tuple: Vec<String>,
    /// Demo: sample size of the quantile learner turned into a scheme.
    #[serde(default = "default_learner_d")]
    pub learner_d: usize,
    /// Lemma check: kept-point count.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "third")]
    pub epsilon: f64,
    #[serde(default = "third")]
    pub delta: f64,
    #[serde(default = "default_compress_trials")]
    pub trials: usize,
    #[serde(default = "default_domain_size")]
    pub domain_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_m: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantumAction {
    Discriminate,
}

fn discriminate() -> QuantumAction {
    QuantumAction::Discriminate
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumParams {
    #[serde(default = "discriminate")]
    pub action: QuantumAction,
    pub gamma: f64,
    pub copies: usize,
    /// Target error for the copy-complexity figure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_copies: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibleLpParams {
    pub task: PathBuf,
    /// Extra rows on top of the simplex; the bare simplex when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polytope: Option<PathBuf>,
    pub epsilon: Rational,
    pub delta: Rational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibleSdpParams {
    /// Directory holding `<theta label>.json` state files.
    pub states: PathBuf,
    pub task: PathBuf,
    pub copies: usize,
    pub epsilon: f64,
    pub delta: f64,
}
