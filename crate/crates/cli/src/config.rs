use std::fmt;
use std::path::{Path, PathBuf};

use neurise_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Capacity(_) => EXIT_CAPACITY,
            Error::Diverged(_) | Error::Contract(_) => EXIT_SOLVER,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Collects flag values that were actually given on the command line.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &str, value: &Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            self.0.insert(key.to_string(), v);
        }
        self
    }

    pub fn flag(&mut self, key: &str, on: bool) -> &mut Self {
        if on {
            self.0.insert(key.to_string(), Value::Bool(true));
        }
        self
    }
}

/// Defaults, then the config file, then flags. A run manifest is accepted as
/// a config file: its `config` block is used.
pub fn resolve<T>(file: Option<&Path>, overrides: Overrides) -> CliResult<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut merged = serde_json::to_value(T::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if value.get("command").is_some() {
            if let Some(inner) = value.get_mut("config").map(Value::take) {
                value = inner;
            }
        }
        overlay(&mut merged, value);
    }
    overlay(&mut merged, Value::Object(overrides.0));
    serde_json::from_value(merged).map_err(|e| CliError::config(format!("config: {e}")))
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// An `l1` penalty given either as a number or as `"auto"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Penalty {
    Value(f64),
    Keyword(String),
}

impl std::str::FromStr for Penalty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Penalty::Keyword(s.into()));
        }
        s.parse::<f64>()
            .map(Penalty::Value)
            .map_err(|_| format!("expected a number or `auto`, got `{s}`"))
    }
}

impl Penalty {
    /// `auto` means `c * sqrt(ln p / n)`.
    pub fn resolve(&self, c: f64, p: usize, n: usize) -> CliResult<f64> {
        match self {
            Penalty::Value(v) => Ok(*v),
            Penalty::Keyword(k) if k == "auto" => {
                Ok(neurise_core::grise::rule_of_thumb_penalty(c, p, n))
            }
            Penalty::Keyword(k) => Err(CliError::config(format!("unknown penalty `{k}`"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    /// `one-d`, `er`, `hypergraph` or `random-hypergraph`.
    pub generator: String,
    pub p: usize,
    /// Chain interaction order for `one-d`.
    pub order: usize,
    /// Chain strengths; drawn from U[-1, 1] when absent.
    pub theta: Option<Vec<f64>>,
    pub degree: f64,
    pub interval: [f64; 2],
    pub signed: bool,
    /// Term size for `random-hypergraph`.
    pub term_order: usize,
    pub n: usize,
    /// `exact` or `gibbs`.
    pub sampler: String,
    pub chains: usize,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub max_log2_states: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            generator: "one-d".into(),
            p: 10,
            order: 6,
            theta: None,
            degree: 2.6,
            interval: [0.3, 1.3],
            signed: false,
            term_order: 3,
            n: 1000,
            sampler: "exact".into(),
            chains: 4,
            burn_in: None,
            thinning: None,
            max_log2_states: 24.0,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    /// Explicit model file.
    pub model: Option<PathBuf>,
    /// Directory of learned conditionals written by `fit`.
    pub learned: Option<PathBuf>,
    /// Energy network file written by `fit --method energy`.
    pub energy_net: Option<PathBuf>,
    pub n: usize,
    pub sampler: String,
    pub chains: usize,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub max_log2_states: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            model: None,
            learned: None,
            energy_net: None,
            n: 1000,
            sampler: "gibbs".into(),
            chains: 4,
            burn_in: None,
            thinning: None,
            max_log2_states: 24.0,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub samples: PathBuf,
    /// `grise`, `neurise`, `structure` or `energy`.
    pub method: String,
    pub seed: u64,
    pub out: PathBuf,

    // GRISE
    pub order: usize,
    /// `monomial` or `indicator`.
    pub basis: String,
    /// `penalized` or `constrained`.
    pub mode: String,
    pub lambda: Penalty,
    /// Constant in the `auto` penalties.
    pub lambda_c: f64,
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,

    // networks
    pub depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub minibatch: usize,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub lr: f64,
    pub final_lr_fraction: f64,
    /// Input-layer penalty; `auto` for `structure` and 0 otherwise when absent.
    pub lambda_in: Option<Penalty>,
    pub zero_input_init: bool,
    pub validation_fraction: f64,
    pub log_every: usize,

    // structure threshold
    /// `stddev-outlier`, `rule-of-thumb` or `manual`.
    pub threshold: String,
    pub threshold_fraction: f64,
    pub threshold_c: f64,
    pub tau: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            samples: PathBuf::from("samples.txt"),
            method: "neurise".into(),
            seed: 0,
            out: PathBuf::from("fit"),
            order: 2,
            basis: "monomial".into(),
            mode: "penalized".into(),
            lambda: Penalty::Keyword("auto".into()),
            lambda_c: 1.0,
            gamma: None,
            tol: 1e-7,
            max_iter: 50_000,
            depth: 2,
            width: 10,
            epochs: 200,
            minibatch: 256,
            optimizer: "adam".into(),
            lr: 1e-3,
            final_lr_fraction: 1.0,
            lambda_in: None,
            zero_input_init: false,
            validation_fraction: 0.0,
            log_every: 1,
            threshold: "stddev-outlier".into(),
            threshold_fraction: 0.5,
            threshold_c: 1.0,
            tau: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// `conditional-error`, `tvd`, `spectrum`, `energy-gap` or `structure`.
    pub metric: String,
    /// Ground-truth model file.
    pub truth: Option<PathBuf>,
    /// Output directory of `fit`.
    pub learned: Option<PathBuf>,
    /// Sample count reported in the `n` column; read from the fit manifest
    /// when absent.
    pub n: Option<usize>,
    pub n_draw: usize,
    pub chains: usize,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub site: usize,
    pub max_order: usize,
    pub max_log2_states: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metric: "conditional-error".into(),
            truth: None,
            learned: None,
            n: None,
            n_draw: 100_000,
            chains: 4,
            burn_in: None,
            thinning: None,
            site: 0,
            max_order: 9,
            max_log2_states: 24.0,
            seed: 0,
            out: PathBuf::from("eval"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandConfig {
    pub model: Option<PathBuf>,
    pub learned: Option<PathBuf>,
    pub energy_net: Option<PathBuf>,
    /// Center variable; the full energy is expanded when absent.
    pub site: Option<usize>,
    pub out: PathBuf,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        ExpandConfig {
            model: None,
            learned: None,
            energy_net: None,
            site: None,
            out: PathBuf::from("expand"),
        }
    }
}
