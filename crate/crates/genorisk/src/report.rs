//! The JSON evaluation report.

use genorisk_core::permtest::PermTestResult;
use genorisk_core::{CvError, Dataset};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const REPORT_FORMAT: &str = "genorisk-report";
pub const REPORT_VERSION: u32 = 1;
pub const MODEL_FORMAT: &str = "genorisk-model";
pub const MODEL_VERSION: u32 = 1;

/// JSON Schema the serialized report conforms to.
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub method: String,
    pub seed: u64,
    /// The config file, verbatim.
    pub config: String,
    /// Method parameters after defaults were filled in.
    pub parameters: serde_json::Value,
    pub dataset: DatasetSummary,
    pub folds: Option<FoldSummary>,
    pub cv: Option<CvError>,
    /// Method-specific output: ranked combinations, fitted expression,
    /// tree text, importance table.
    pub results: serde_json::Value,
    pub perm_test: Option<PermTestResult>,
    pub balance: Option<BalanceSummary>,
    /// Wall-clock; the only field that varies between identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSummary {
    /// File path as written in the config, or "synth".
    pub source: String,
    pub rows: usize,
    pub predictors: usize,
    pub cases: usize,
    pub controls: usize,
    pub names: Vec<String>,
}

impl DatasetSummary {
    pub fn of(ds: &Dataset, source: &str) -> DatasetSummary {
        let [controls, cases] = ds.class_counts(&ds.all_rows());
        DatasetSummary {
            source: source.to_string(),
            rows: ds.n_rows(),
            predictors: ds.n_predictors(),
            cases,
            controls,
            names: ds.names().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldSummary {
    pub k: usize,
    pub shuffled: bool,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceSummary {
    pub repeats: usize,
    pub mean_error: f64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub seconds: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// The report without wall-clock, for comparing runs.
    pub fn deterministic_json(&self) -> Result<String> {
        EvalReport { timing: None, ..self.clone() }.to_json()
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        let report: EvalReport = serde_json::from_str(text)?;
        if report.format != REPORT_FORMAT {
            return Err(Error::config("report", format!("not a report (format {:?})", report.format)));
        }
        if report.version > REPORT_VERSION {
            return Err(Error::config("report", format!("report version {} is newer than this build", report.version)));
        }
        Ok(report)
    }

    /// Plain-text summary for terminals.
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let d = &self.dataset;
        let _ = writeln!(out, "method      {}", self.method);
        let _ = writeln!(out, "seed        {}", self.seed);
        let _ = writeln!(
            out,
            "data        {} ({} rows: {} cases, {} controls; {} predictors)",
            d.source, d.rows, d.cases, d.controls, d.predictors
        );
        if let Some(f) = &self.folds {
            let _ = writeln!(out, "folds       {} ({})", f.k, if f.shuffled { "shuffled" } else { "contiguous" });
        }
        if let Some(cv) = &self.cv {
            let _ = writeln!(out, "cv error    {:.4}", cv.value);
        }
        if let Some(p) = &self.perm_test {
            let _ = writeln!(
                out,
                "perm test   p = {:.4} (B = {}, +/- {:.4}), {} at alpha {}",
                p.p_value,
                p.replicates,
                p.accuracy_bound,
                if p.reject { "reject" } else { "retain" },
                p.alpha
            );
        }
        if let Some(b) = &self.balance {
            let _ = writeln!(out, "balanced    mean cv error {:.4} over {} resamples", b.mean_error, b.repeats);
        }
        if let Some(t) = &self.timing {
            let _ = writeln!(out, "time        {:.2}s", t.seconds);
        }
        for (key, value) in self.results.as_object().into_iter().flatten() {
            if let Some(line) = summary_line(key, value) {
                let _ = writeln!(out, "{line}");
            }
        }
        out
    }
}

fn summary_line(key: &str, value: &serde_json::Value) -> Option<String> {
    use serde_json::Value;
    match (key, value) {
        ("expression" | "tree", Value::String(s)) => Some(format!("{key:<11} {s}")),
        ("ranked", Value::Array(rows)) => {
            let top: Vec<String> = rows
                .iter()
                .take(5)
                .map(|r| format!("{} {:.4}", r["names"], r["cv_error"].as_f64().unwrap_or(f64::NAN)))
                .collect();
            Some(format!("top combos  {}", top.join("; ")))
        }
        ("ranking", Value::Array(names)) => {
            let names: Vec<String> = names.iter().take(10).map(|n| n.as_str().unwrap_or("?").to_string()).collect();
            Some(format!("importance  {}", names.join(" > ")))
        }
        _ => None,
    }
}
