//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! folds = 6
//! output = "report.json"
//!
//! [dataset]
//! path = "cohort.csv"
//! phenotype = "status"
//! phenotype_coding = "binary"
//!
//! [permutation]
//! replicates = 1000
//!
//! [method]
//! kind = "mdr"
//! max_order = 2
//! ```

use std::path::{Path, PathBuf};

use genorisk_core::cart::CartConfig;
use genorisk_core::ensemble::{CvimConfig, RfConfig, SgbConfig};
use genorisk_core::logicreg::{Constraint, FitOptions, Objective, Schedule};
use genorisk_core::mdr::Smoothing;
use genorisk_core::synth::GenSpec;
use serde::{Deserialize, Deserializer, Serialize};

use crate::io::ColumnSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Shuffle rows before cutting folds. When false the folds are
    /// contiguous blocks in file order.
    #[serde(default = "yes")]
    pub shuffle_folds: bool,
    /// Worker threads; `None` defers to the environment.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Report path; standard output when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Fitted model path (JSON), when wanted.
    #[serde(default)]
    pub model_output: Option<PathBuf>,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    /// Synthetic design, used when there is no `[dataset]` block.
    #[serde(default)]
    pub synth: Option<GenSpec>,
    #[serde(default)]
    pub balance: Option<BalanceConfig>,
    #[serde(default)]
    pub permutation: Option<PermutationConfig>,
    pub method: Method,
}

fn default_folds() -> usize {
    6
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub phenotype: String,
    #[serde(default)]
    pub phenotype_coding: crate::io::PhenotypeCoding,
    #[serde(default = "comma")]
    pub separator: char,
    #[serde(default)]
    pub predictors: Option<Vec<String>>,
    #[serde(default)]
    pub external: Vec<String>,
}

fn comma() -> char {
    ','
}

impl DatasetConfig {
    pub fn columns(&self) -> ColumnSpec {
        ColumnSpec {
            phenotype: self.phenotype.clone(),
            phenotype_coding: self.phenotype_coding,
            separator: self.separator,
            predictors: self.predictors.clone(),
            external: self.external.clone(),
        }
    }
}

/// Repeat the evaluation on class-balanced bootstrap enlargements of the
/// data and average the errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationConfig {
    pub replicates: usize,
    pub alpha: f64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig { replicates: 1000, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Mdr(MdrParams),
    Mdrir(MdrParams),
    Logicreg(LogicParams),
    Cart(CartConfig),
    Rf(RfConfig),
    Sgb(SgbParams),
    Cvim(CvimConfig),
    /// Another method followed by a permutation test of its selection.
    Permtest(PermtestParams),
    /// Write the `[synth]` design's sample to `data_output`.
    Synth(SynthParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Mdr(_) => "mdr",
            Method::Mdrir(_) => "mdrir",
            Method::Logicreg(_) => "logicreg",
            Method::Cart(_) => "cart",
            Method::Rf(_) => "rf",
            Method::Sgb(_) => "sgb",
            Method::Cvim(_) => "cvim",
            Method::Permtest(_) => "permtest",
            Method::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdrParams {
    pub min_order: usize,
    pub max_order: usize,
    /// Pseudo-counts for the independent rule.
    pub smoothing: Smoothing,
    /// Column names to search; all predictors when absent.
    pub predictors: Option<Vec<String>>,
    pub max_cell_updates: u64,
    /// Ranked combinations kept in the report.
    pub report_top: usize,
}

impl Default for MdrParams {
    fn default() -> Self {
        let core = genorisk_core::mdr::MdrSearchConfig::default();
        MdrParams {
            min_order: core.min_order,
            max_order: core.max_order,
            smoothing: core.smoothing,
            predictors: None,
            max_cell_updates: u64::try_from(core.max_cell_updates).unwrap_or(u64::MAX),
            report_top: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogicParams {
    pub s: usize,
    pub r_max: usize,
    pub constraint: Constraint,
    pub steps: usize,
    pub schedule: Schedule,
    pub objective: Objective,
    pub restarts: usize,
    pub fit: FitOptions,
    pub t0_samples: usize,
    /// Column names trees may use; all predictors when absent.
    pub predictors: Option<Vec<String>>,
    pub trace: bool,
}

impl Default for LogicParams {
    fn default() -> Self {
        let core = genorisk_core::logicreg::AnnealConfig::default();
        LogicParams {
            s: core.s,
            r_max: core.r_max,
            constraint: core.constraint,
            steps: core.steps,
            schedule: core.schedule,
            objective: core.objective,
            restarts: core.restarts,
            fit: core.fit,
            t0_samples: core.t0_samples,
            predictors: None,
            trace: false,
        }
    }
}

/// Boosting parameters; a nonempty `grid` evaluates each listed
/// configuration instead and reports the best.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgbParams {
    #[serde(flatten)]
    pub config: SgbConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<SgbConfig>,
}

impl<'de> Deserialize<'de> for SgbParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut map = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
        let grid = match map.remove("grid") {
            Some(g) => serde_json::from_value(g).map_err(D::Error::custom)?,
            None => Vec::new(),
        };
        let config = serde_json::from_value(serde_json::Value::Object(map)).map_err(D::Error::custom)?;
        Ok(SgbParams { config, grid })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermtestParams {
    pub target: Box<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub data_output: PathBuf,
    pub phenotype: String,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { data_output: PathBuf::from("synth.csv"), phenotype: "phenotype".into() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| format!(" (byte {})", s.start)).unwrap_or_default();
            Error::config("file", format!("{}{at}", e.message()))
        })?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config { message, .. } => Error::config(path.display().to_string(), message),
            other => other,
        })?;
        Ok((config, text))
    }

    /// Static checks that need no data.
    pub fn check(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::config("folds", "at least two folds are needed"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "worker count must be positive"));
        }
        if let Some(p) = &self.permutation {
            if p.replicates == 0 {
                return Err(Error::config("permutation.replicates", "must be at least 1"));
            }
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                return Err(Error::config("permutation.alpha", "must lie in (0, 1)"));
            }
        }
        if self.balance.is_some_and(|b| b.repeats == 0) {
            return Err(Error::config("balance.repeats", "must be at least 1"));
        }
        let needs_data = !matches!(self.method, Method::Synth(_));
        match (&self.dataset, &self.synth) {
            (None, None) if needs_data => Err(Error::config("dataset", "a [dataset] or [synth] block is required")),
            (_, None) if !needs_data => Err(Error::config("synth", "method synth needs a [synth] block")),
            _ => match &self.method {
                Method::Permtest(p) if matches!(*p.target, Method::Permtest(_) | Method::Synth(_) | Method::Cvim(_)) => {
                    Err(Error::config("method.target", "permtest target must be a cross-validated method"))
                }
                _ => Ok(()),
            },
        }
    }
}
