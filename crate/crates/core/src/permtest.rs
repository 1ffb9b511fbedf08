//! Permutation significance tests.
//!
//! [`permutation_test`] retrains the learner on B phenotype-permuted copies
//! of the data and reports the Monte Carlo p-value of the observed
//! cross-validated error; [`permutation_test_by`] does the same for any
//! error statistic. [`column_permutation_importance`] keeps a trained
//! predictor fixed and measures how much its error grows when one predictor
//! column is shuffled.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan, Label};
use crate::metrics::{self, Learner, Predictor};
use crate::rng::{self, derive_seed, STREAM_COLUMN_PERM, STREAM_PERM, STREAM_PERM_RETRY};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub observed_error: f64,
    /// Replicate errors in replicate order.
    pub null_errors: Vec<f64>,
    pub p_value: f64,
    pub replicates: usize,
    /// Upper bound 1/(2 sqrt(B)) on the Monte Carlo error of the p-value.
    pub accuracy_bound: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Replicates whose first permutation produced a single-class fold.
    pub resampled: usize,
}

pub fn accuracy_bound(replicates: usize) -> f64 {
    0.5 / crate::math::sqrt(replicates as f64)
}

/// Empirical c.d.f. of the null errors evaluated at `observed`.
pub fn monte_carlo_p_value(observed: f64, null_errors: &[f64]) -> f64 {
    let below = null_errors.iter().filter(|&&e| e <= observed).count();
    below as f64 / null_errors.len() as f64
}

fn permuted_labels(ds: &Dataset, rng: &mut rng::Rng) -> Vec<Label> {
    let perm = rng::permutation(ds.n_rows(), rng);
    perm.iter().map(|&p| ds.label(p)).collect()
}

/// Test independence of predictors and phenotype with `replicates`
/// phenotype permutations. Each replicate retrains `learner` under the same
/// fold plan.
pub fn permutation_test<L: Learner + ?Sized>(
    learner: &L,
    ds: &Dataset,
    plan: &FoldPlan,
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<PermTestResult> {
    permutation_test_by(ds, replicates, alpha, seed, |d, s| Ok(metrics::cv_error(learner, d, plan, s)?.value))
}

/// Permutation test of an arbitrary error statistic, called as
/// `statistic(data, seed)` on the observed data and on every permuted copy.
/// A statistic that selects a model (a combination search, an annealing run)
/// must redo the selection inside, or the observed value is biased low.
pub fn permutation_test_by<S>(ds: &Dataset, replicates: usize, alpha: f64, seed: u64, statistic: S) -> Result<PermTestResult>
where
    S: Fn(&Dataset, u64) -> Result<f64> + Sync + Send,
{
    if replicates == 0 {
        return Err(Error::param("permutation test needs at least one replicate"));
    }
    let observed = statistic(ds, seed)?;

    let outcomes = par::try_map_indexed(replicates, |b| {
        let b = b as u64;
        let attempt = |stream: u64| -> Result<f64> {
            let replicate_seed = derive_seed(seed, stream, b);
            let labels = permuted_labels(ds, &mut rng::rng_from_seed(replicate_seed));
            let permuted = ds.with_labels(labels)?;
            statistic(&permuted, replicate_seed)
        };
        match attempt(STREAM_PERM) {
            Err(Error::DegenerateFold { .. }) => attempt(STREAM_PERM_RETRY).map(|e| (e, true)),
            other => other.map(|e| (e, false)),
        }
    })?;

    let null_errors: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let resampled = outcomes.iter().filter(|o| o.1).count();
    let p_value = monte_carlo_p_value(observed, &null_errors);
    Ok(PermTestResult {
        observed_error: observed,
        null_errors,
        p_value,
        replicates,
        accuracy_bound: accuracy_bound(replicates),
        alpha,
        reject: p_value < alpha,
        resampled,
    })
}

/// Mean balanced error of the fixed predictor `f` over `repeats` random
/// rearrangements of one predictor column, on all rows. Identity
/// rearrangements are redrawn.
pub fn column_permutation_importance<P: Predictor + ?Sized>(
    f: &P,
    ds: &Dataset,
    column: usize,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    if column >= ds.n_predictors() {
        return Err(Error::param("column index out of range"));
    }
    if repeats == 0 {
        return Err(Error::param("at least one repeat required"));
    }
    let rows = ds.all_rows();
    let original = ds.column(column);
    let n = ds.n_rows();
    let errors = par::try_map_indexed(repeats, |r| {
        let mut rng = rng::derived_rng(seed, STREAM_COLUMN_PERM, r as u64);
        let mut perm = rng::permutation(n, &mut rng);
        while n > 1 && perm.iter().enumerate().all(|(j, &p)| j == p) {
            perm = rng::permutation(n, &mut rng);
        }
        let shuffled: Vec<u8> = perm.iter().map(|&p| original[p]).collect();
        metrics::balanced_error(f, &ds.with_column(column, &shuffled)?, &rows)
    })?;
    Ok(errors.iter().sum::<f64>() / repeats as f64)
}
