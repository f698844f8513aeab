//! Experiment configuration: a TOML file of `key = value` sections.
//!
//! One file drives all CLI subcommands; `run`/`sweep` need `[dataset]` and
//! `[method]`, `theory` needs `[theory]`. There is no environment-variable
//! configuration: everything an experiment depends on is in the file (plus
//! the explicit seed overrides on the command line).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::baselines::MethodSpec;
use crate::data::LabelColumn;
use crate::error::{Error, Result};
use crate::theory::EtaSpec;

/// Root of the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    pub method: Option<MethodSpec>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub sweep: Option<SweepSection>,
    pub theory: Option<TheorySection>,
}

impl ConfigFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn require_dataset(&self) -> Result<&DatasetConfig> {
        self.dataset
            .as_ref()
            .ok_or_else(|| Error::config("config needs a [dataset] section".to_string()))
    }

    pub fn require_method(&self) -> Result<&MethodSpec> {
        self.method
            .as_ref()
            .ok_or_else(|| Error::config("config needs a [method] section".to_string()))
    }

    pub fn require_theory(&self) -> Result<&TheorySection> {
        self.theory
            .as_ref()
            .ok_or_else(|| Error::config("config needs a [theory] section".to_string()))
    }
}

/// Where the data comes from and how it splits. The split seed is explicit:
/// all methods and runs of an experiment share one train/test split.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    TwoGaussians {
        n: usize,
        #[serde(default = "default_flip_fraction")]
        flip_fraction: f64,
        seed: u64,
        test_fraction: f64,
        split_seed: u64,
    },
    Smooth {
        n: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        eta: EtaName,
        eta_value: Option<f64>,
        seed: u64,
        test_fraction: f64,
        split_seed: u64,
    },
    Csv {
        path: PathBuf,
        label_column: LabelColumn,
        #[serde(default = "default_true")]
        has_header: bool,
        test_fraction: f64,
        split_seed: u64,
    },
}

fn default_flip_fraction() -> f64 {
    0.1
}

fn default_dim() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// Label functions addressable from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaName {
    Constant,
    MeanCoordinate,
    #[default]
    SineMean,
    SquareMean,
}

impl EtaName {
    pub fn to_spec(self, value: Option<f64>) -> Result<EtaSpec> {
        Ok(match self {
            EtaName::Constant => {
                let v = value.ok_or_else(|| {
                    Error::config("eta = \"constant\" needs eta_value".to_string())
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(format!(
                        "eta_value must be in [0, 1], got {v}"
                    )));
                }
                EtaSpec::Constant(v)
            }
            EtaName::MeanCoordinate => EtaSpec::MeanCoordinate,
            EtaName::SineMean => EtaSpec::SineMean,
            EtaName::SquareMean => EtaSpec::SquareMean,
        })
    }
}

/// Network architecture (hidden layer widths; input/output come from the
/// data).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden_layers: default_hidden(),
        }
    }
}

/// Optimizer settings; defaults are minibatch 128 and Adam at 0.001.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
}

fn default_epochs() -> usize {
    20
}

fn default_batch_size() -> usize {
    128
}

fn default_learning_rate() -> f64 {
    0.001
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
        }
    }
}

/// Repetition settings: each method runs `n_runs` times with seeds
/// `base_seed + r`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Seed of the anchor baseline's preliminary model. Defaults to a value
    /// derived from `base_seed`; sweeps resolve it once so the preliminary
    /// model is shared across all grid points.
    pub anchor_prelim_seed: Option<u64>,
}

fn default_n_runs() -> usize {
    5
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            n_runs: default_n_runs(),
            base_seed: 0,
            anchor_prelim_seed: None,
        }
    }
}

/// Per-hyperparameter value lists for `sweep`. Omitted lists fall back to
/// the built-in search grid of the configured method.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub k: Option<Vec<usize>>,
    pub t1: Option<Vec<f64>>,
    pub t2: Option<Vec<f64>>,
    pub n_warm: Option<Vec<u64>>,
    pub m: Option<Vec<usize>>,
    pub p: Option<Vec<crate::nn::LpNorm>>,
    pub psi: Option<Vec<crate::baselines::PsiKind>>,
}

/// Settings of the `theory` subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    #[serde(default)]
    pub kind: TheoryKind,
    #[serde(default)]
    pub eta: EtaName,
    pub eta_value: Option<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub schedule: ScheduleName,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_grid_per_axis")]
    pub grid_per_axis: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_oracle_sample_size")]
    pub oracle_sample_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TheoryKind {
    /// Monte Carlo rate experiment plus the bound column.
    #[default]
    Rate,
    /// Bound evaluation only.
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    #[default]
    Power,
    LinearFraction,
}

fn default_exponent() -> f64 {
    2.0 / 3.0
}

fn default_beta() -> f64 {
    0.1
}

fn default_n_grid() -> Vec<usize> {
    vec![1000, 4000, 16000, 64000]
}

fn default_trials() -> usize {
    5
}

fn default_grid_per_axis() -> usize {
    512
}

fn default_delta() -> f64 {
    0.05
}

fn default_oracle_sample_size() -> usize {
    200_000
}
