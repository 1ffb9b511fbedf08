//! Method dispatch for one run config.

use std::path::{Path, PathBuf};
use std::time::Instant;

use genorisk_core::cart::{grow_tree, CartLearner};
use genorisk_core::dataset::balance_resample;
use genorisk_core::ensemble::{
    cvim, default_tree_count, default_tree_count_log10, fit_rf, fit_sgb, sgb_grid, RfLearner, SgbLearner,
};
use genorisk_core::logicreg::{anneal, AnnealConfig, ForestLearner};
use genorisk_core::mdr::{fit_mdr, fit_mdrir, mdr_search, MdrSearchConfig, MdrVariant};
use genorisk_core::metrics::cv_error;
use genorisk_core::permtest::{permutation_test_by, PermTestResult};
use genorisk_core::rng::derive_seed;
use genorisk_core::synth::generate;
use genorisk_core::{par, CvError, Dataset, FoldPlan};
use serde_json::{json, Value};

use crate::config::{LogicParams, MdrParams, Method, PermutationConfig, RunConfig, SgbParams};
use crate::error::Context;
use crate::report::{
    BalanceSummary, DatasetSummary, EvalReport, FoldSummary, Timing, MODEL_FORMAT, MODEL_VERSION, REPORT_FORMAT,
    REPORT_VERSION,
};
use crate::{io, Error, Result};

// Seed streams owned by the front end, kept clear of the library's.
const STREAM_BALANCE: u64 = 101;

/// A parsed config with its text and the directory relative paths resolve
/// against.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: RunConfig,
    pub text: String,
    pub base: PathBuf,
}

impl Job {
    pub fn load(path: &Path) -> Result<Job> {
        let (config, text) = RunConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Job { config, text, base })
    }

    pub fn from_text(text: &str, base: impl Into<PathBuf>) -> Result<Job> {
        Ok(Job { config: RunConfig::from_toml(text)?, text: text.to_string(), base: base.into() })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    /// Read or generate the dataset named by the config.
    pub fn dataset(&self) -> Result<(Dataset, String)> {
        match (&self.config.dataset, &self.config.synth) {
            (Some(d), _) => {
                let ds = io::load_dataset(&self.resolve(&d.path), &d.columns())?;
                Ok((ds, d.path.display().to_string()))
            }
            (None, Some(spec)) => Ok((generate(spec).within("synth", "synth")?, "synth".to_string())),
            (None, None) => Err(Error::config("dataset", "a [dataset] or [synth] block is required")),
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: EvalReport,
    /// Versioned model document, for methods that fit one.
    pub model: Option<Value>,
    /// Generated sample, for the synth method.
    pub data: Option<Dataset>,
}

/// The error statistic a run reports, recomputed on permuted or
/// rebalanced data. Search methods redo their search, so the statistic is
/// the best error the search finds.
enum Target {
    Mdr(MdrSearchConfig),
    Logic(AnnealConfig),
    Cart(CartLearner),
    Rf(RfLearner),
    Sgb(SgbLearner),
}

impl Target {
    fn statistic(&self, ds: &Dataset, plan: &FoldPlan, seed: u64) -> genorisk_core::Result<f64> {
        Ok(match self {
            Target::Mdr(cfg) => mdr_search(ds, plan, cfg, seed)?.best().cv.value,
            Target::Logic(cfg) => anneal(ds, plan, cfg, seed)?.best_error,
            Target::Cart(l) => cv_error(l, ds, plan, seed)?.value,
            Target::Rf(l) => cv_error(l, ds, plan, seed)?.value,
            Target::Sgb(l) => cv_error(l, ds, plan, seed)?.value,
        })
    }

    fn permtest(&self, ds: &Dataset, plan: &FoldPlan, p: PermutationConfig, seed: u64) -> genorisk_core::Result<PermTestResult> {
        permutation_test_by(ds, p.replicates, p.alpha, seed, |d, s| self.statistic(d, plan, s))
    }
}

struct Evaluated {
    cv: Option<CvError>,
    results: Value,
    model: Option<Value>,
    target: Option<Target>,
}

fn fold_plan(config: &RunConfig, ds: &Dataset) -> Result<FoldPlan> {
    let plan = if config.shuffle_folds {
        FoldPlan::shuffled(ds, config.folds, config.seed)
    } else {
        FoldPlan::contiguous(ds.n_rows(), config.folds)
    };
    plan.within("dataset", "folds")
}

fn column_indices(ds: &Dataset, names: &Option<Vec<String>>, path: &str) -> Result<Option<Vec<usize>>> {
    let Some(names) = names else { return Ok(None) };
    names
        .iter()
        .map(|n| {
            ds.names()
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::config(path, format!("no predictor named {n:?}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn model_doc(method: &str, model: impl serde::Serialize) -> Result<Value> {
    Ok(json!({ "format": MODEL_FORMAT, "version": MODEL_VERSION, "method": method, "model": serde_json::to_value(model)? }))
}

fn eval_mdr(ds: &Dataset, plan: &FoldPlan, p: &MdrParams, variant: MdrVariant, seed: u64, path: &str) -> Result<Evaluated> {
    let module = if variant == MdrVariant::Classic { "mdr" } else { "mdrir" };
    let cfg = MdrSearchConfig {
        min_order: p.min_order,
        max_order: p.max_order,
        variant,
        smoothing: p.smoothing,
        restrict: column_indices(ds, &p.predictors, &format!("{path}.predictors"))?,
        max_cell_updates: p.max_cell_updates.into(),
    };
    let search = mdr_search(ds, plan, &cfg, seed).within(module, path)?;
    let best = search.best().clone();
    let ranked: Vec<Value> = search
        .ranked
        .iter()
        .take(p.report_top)
        .map(|r| {
            json!({
                "names": r.combo.names(ds),
                "columns": r.combo.indices(),
                "cv_error": r.cv.value,
                "per_fold": r.cv.per_fold,
            })
        })
        .collect();
    let all = ds.all_rows();
    let model = match variant {
        MdrVariant::Classic => fit_mdr(ds, &all, &best.combo),
        MdrVariant::IndependentRule => fit_mdrir(ds, &all, &best.combo, p.smoothing),
    }
    .within(module, path)?;
    Ok(Evaluated {
        cv: Some(best.cv.clone()),
        results: json!({
            "best": best.combo.names(ds),
            "ranked": ranked,
            "search_space": search.search_space,
            "cell_updates": search.cell_updates,
            "high_risk_cells": model.cells.iter().filter(|l| l.as_i8() > 0).count(),
        }),
        model: Some(model_doc(module, &model)?),
        target: Some(Target::Mdr(cfg)),
    })
}

fn eval_logicreg(ds: &Dataset, plan: &FoldPlan, p: &LogicParams, seed: u64, path: &str) -> Result<Evaluated> {
    let cfg = AnnealConfig {
        s: p.s,
        r_max: p.r_max,
        constraint: p.constraint,
        steps: p.steps,
        schedule: p.schedule,
        objective: p.objective,
        restarts: p.restarts,
        fit: p.fit,
        t0_samples: p.t0_samples,
        predictors: column_indices(ds, &p.predictors, &format!("{path}.predictors"))?,
        trace: p.trace,
    };
    let out = anneal(ds, plan, &cfg, seed).within("logicreg", path)?;
    let learner = ForestLearner { forest: out.fit.forest.clone(), fixed: out.fit.fixed.clone(), options: p.fit };
    // Report the per-fold error of the chosen forest whatever the search used.
    let cv = cv_error(&learner, ds, plan, seed).within("logicreg", path)?;
    let fit = &out.fit;
    Ok(Evaluated {
        cv: Some(cv),
        results: json!({
            "expression": fit.render(ds.names()),
            "trees": fit.forest.trees.iter().map(|t| t.render(ds.names())).collect::<Vec<_>>(),
            "beta": fit.beta,
            "fixed": fit.fixed.iter().map(|&i| ds.names()[i].clone()).collect::<Vec<_>>(),
            "degenerate": fit.degenerate,
            "converged": fit.converged,
            "search_error": out.best_error,
            "initial_error": out.initial_error,
            "restart_errors": out.restart_errors,
            "temperatures": out.temperatures,
            "evaluations": out.evaluations,
            "trace": out.trace,
        }),
        model: Some(model_doc("logicreg", fit)?),
        target: Some(Target::Logic(cfg)),
    })
}

fn eval_sgb(ds: &Dataset, plan: &FoldPlan, p: &SgbParams, seed: u64, path: &str) -> Result<Evaluated> {
    let (config, cv, grid) = if p.grid.is_empty() {
        let cv = cv_error(&SgbLearner { config: p.config }, ds, plan, seed).within("sgb", path)?;
        (p.config, cv, Value::Null)
    } else {
        let errors = sgb_grid(ds, plan, &p.grid, seed).within("sgb", &format!("{path}.grid"))?;
        let mut best = 0;
        for (c, e) in errors.iter().enumerate() {
            if e.value < errors[best].value {
                best = c;
            }
        }
        let table: Vec<Value> = p.grid.iter().zip(&errors).map(|(c, e)| json!({ "config": c, "cv_error": e.value })).collect();
        (p.grid[best], errors[best].clone(), json!({ "cells": table, "selected": best }))
    };
    let model = fit_sgb(ds, &ds.all_rows(), &config, seed).within("sgb", path)?;
    Ok(Evaluated {
        cv: Some(cv),
        results: json!({
            "config": config,
            "grid": grid,
            "f0": model.f0,
            "threshold": model.threshold,
            "stage_losses": model.stage_losses,
            "clamped_rows": model.clamped_rows,
        }),
        model: Some(model_doc("sgb", &model)?),
        target: Some(Target::Sgb(SgbLearner { config })),
    })
}

fn evaluate_method(method: &Method, ds: &Dataset, plan: &FoldPlan, seed: u64, path: &str) -> Result<Evaluated> {
    let all = ds.all_rows();
    match method {
        Method::Mdr(p) => eval_mdr(ds, plan, p, MdrVariant::Classic, seed, path),
        Method::Mdrir(p) => eval_mdr(ds, plan, p, MdrVariant::IndependentRule, seed, path),
        Method::Logicreg(p) => eval_logicreg(ds, plan, p, seed, path),
        Method::Cart(c) => {
            let learner = CartLearner { config: *c };
            let cv = cv_error(&learner, ds, plan, seed).within("cart", path)?;
            let tree = grow_tree(ds, &all, c, seed).within("cart", path)?;
            Ok(Evaluated {
                cv: Some(cv),
                results: json!({ "tree": tree.render(ds.names()), "leaves": tree.n_leaves() }),
                model: Some(model_doc("cart", &tree)?),
                target: Some(Target::Cart(learner)),
            })
        }
        Method::Rf(c) => {
            let learner = RfLearner { config: *c };
            let cv = cv_error(&learner, ds, plan, seed).within("rf", path)?;
            let model = fit_rf(ds, &all, c, seed).within("rf", path)?;
            let n = ds.n_rows();
            Ok(Evaluated {
                cv: Some(cv),
                results: json!({
                    "trees": model.trees.len(),
                    "default_trees": { "natural_log": default_tree_count(n), "log10": default_tree_count_log10(n) },
                    "threshold": model.threshold,
                    "mean_leaves": model.trees.iter().map(|t| t.n_leaves()).sum::<usize>() as f64 / model.trees.len() as f64,
                }),
                model: Some(model_doc("rf", &model)?),
                target: Some(Target::Rf(learner)),
            })
        }
        Method::Sgb(p) => eval_sgb(ds, plan, p, seed, path),
        Method::Cvim(c) => {
            let report = cvim(ds, c, seed).within("cvim", path)?;
            let ranking: Vec<&str> = report.ranking().into_iter().map(|i| ds.names()[i].as_str()).collect();
            Ok(Evaluated {
                cv: None,
                results: json!({
                    "ranking": ranking,
                    "entries": report.entries,
                    "replicates": report.replicates,
                    "effective_replicates": report.effective_replicates,
                }),
                model: None,
                target: None,
            })
        }
        Method::Permtest(p) => {
            let inner = evaluate_method(&p.target, ds, plan, seed, &format!("{path}.target"))?;
            Ok(Evaluated { results: json!({ "target": p.target.name(), "target_results": inner.results }), ..inner })
        }
        Method::Synth(_) => Err(Error::config(path, "synth is not an evaluation method")),
    }
}

/// Evaluate a job without writing any file.
pub fn evaluate(job: &Job) -> Result<Outcome> {
    let start = Instant::now();
    let config = &job.config;
    let (ds, source) = job.dataset()?;
    let parameters = serde_json::to_value(&config.method)?;
    let mut report = EvalReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        method: config.method.name().to_string(),
        seed: config.seed,
        config: job.text.clone(),
        parameters,
        dataset: DatasetSummary::of(&ds, &source),
        folds: None,
        cv: None,
        results: Value::Null,
        perm_test: None,
        balance: None,
        timing: None,
    };

    if let Method::Synth(p) = &config.method {
        let spec = config.synth.as_ref().ok_or_else(|| Error::config("synth", "method synth needs a [synth] block"))?;
        report.results = json!({
            "data_output": p.data_output,
            "bayes_balanced_error": spec.bayes_balanced_error().ok(),
        });
        report.timing = Some(Timing { seconds: start.elapsed().as_secs_f64() });
        return Ok(Outcome { report, model: None, data: Some(ds) });
    }

    let plan = fold_plan(config, &ds)?;
    report.folds = Some(FoldSummary {
        k: plan.k(),
        shuffled: config.shuffle_folds,
        sizes: plan.folds().iter().map(Vec::len).collect(),
    });
    let ev = evaluate_method(&config.method, &ds, &plan, config.seed, "method")?;
    report.cv = ev.cv;
    report.results = ev.results;

    let perm = match (&config.method, config.permutation) {
        (Method::Permtest(_), p) => Some(p.unwrap_or_default()),
        (_, p) => p,
    };
    if let Some(p) = perm {
        let target = ev.target.as_ref().ok_or_else(|| {
            Error::config("permutation", format!("method {} has no cross-validated model to test", config.method.name()))
        })?;
        report.perm_test = Some(target.permtest(&ds, &plan, p, config.seed).within("permtest", "permutation")?);
    }

    if let Some(b) = config.balance {
        let target = ev.target.as_ref().ok_or_else(|| {
            Error::config("balance", format!("method {} has no cross-validated model to rebalance", config.method.name()))
        })?;
        let errors = par::try_map_indexed(b.repeats, |r| {
            let seed = derive_seed(config.seed, STREAM_BALANCE, r as u64);
            let balanced = balance_resample(&ds, seed)?;
            let plan = if config.shuffle_folds {
                FoldPlan::shuffled(&balanced, config.folds, seed)?
            } else {
                FoldPlan::contiguous(balanced.n_rows(), config.folds)?
            };
            target.statistic(&balanced, &plan, seed)
        })
        .within("balance", "balance")?;
        let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
        report.balance = Some(BalanceSummary { repeats: b.repeats, mean_error, errors });
    }

    report.timing = Some(Timing { seconds: start.elapsed().as_secs_f64() });
    Ok(Outcome { report, model: ev.model, data: None })
}

/// Write `text` to `path` through a temporary sibling, so a failed run
/// never leaves a partial file.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Evaluate a job and write the model and data files it names. The report
/// itself is returned; the caller decides where it goes.
pub fn run(job: &Job) -> Result<Outcome> {
    let outcome = evaluate(job)?;
    if let (Some(path), Some(model)) = (&job.config.model_output, &outcome.model) {
        let mut text = serde_json::to_string_pretty(model)?;
        text.push('\n');
        write_atomic(&job.resolve(path), &text)?;
    }
    if let (Method::Synth(p), Some(ds)) = (&job.config.method, &outcome.data) {
        let sep = job.config.dataset.as_ref().map_or(',', |d| d.separator);
        let path = job.resolve(&p.data_output);
        let mut buf = Vec::new();
        io::write_dataset(ds, &mut buf, &p.phenotype, sep)?;
        write_atomic(&path, std::str::from_utf8(&buf).expect("csv output is utf-8"))?;
    }
    Ok(outcome)
}

/// Run `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(f))
}
