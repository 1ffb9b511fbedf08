//! Class-balanced prediction error and the K-fold harness shared by every
//! method.
//!
//! Conventions used crate-wide:
//! - an estimate equal to its threshold classifies as [`Label::Control`];
//! - an undefined empirical probability (no matching rows) never exceeds a
//!   threshold, so empty cells also classify as [`Label::Control`].

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan, Label};
use crate::error::FoldPart;
use crate::math::CompensatedSum;
use crate::par;
use crate::rng::{derive_seed, STREAM_CV};
use crate::{Error, Result};

/// A prediction function from the ternary predictor space to labels.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[u8]) -> Label;

    /// Human-readable summary for reports.
    fn describe(&self) -> String {
        String::new()
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, x: &[u8]) -> Label {
        (**self).predict(x)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// A prediction algorithm: trains a [`Predictor`] on a subsample.
///
/// Implementations must be deterministic given `seed` and must only read the
/// listed rows.
pub trait Learner: Send + Sync {
    type Model: Predictor;

    fn fit(&self, ds: &Dataset, rows: &[usize], seed: u64) -> Result<Self::Model>;
}

/// Wraps a closure as a [`Predictor`].
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[u8]) -> Label + Send + Sync,
{
    fn predict(&self, x: &[u8]) -> Label {
        (self.0)(x)
    }
}

/// Learner that ignores its data and always returns the same label.
#[derive(Debug, Clone, Copy)]
pub struct ConstantLearner(pub Label);

impl Predictor for Label {
    fn predict(&self, _x: &[u8]) -> Label {
        *self
    }

    fn describe(&self) -> String {
        alloc::format!("constant {}", self.as_i8())
    }
}

impl Learner for ConstantLearner {
    type Model = Label;

    fn fit(&self, _ds: &Dataset, _rows: &[usize], _seed: u64) -> Result<Label> {
        Ok(self.0)
    }
}

/// Penalty weight 1/(4 P(Y=y)) with the class frequency estimated on `rows`.
pub fn penalty(ds: &Dataset, rows: &[usize], label: Label) -> Result<f64> {
    let counts = ds.require_both_classes(rows, "penalty weight")?;
    let fraction = counts[label.index()] as f64 / rows.len() as f64;
    Ok(1.0 / (4.0 * fraction))
}

/// Fraction of cases among `rows`; `None` when `rows` is empty.
pub fn case_fraction(ds: &Dataset, rows: &[usize]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    Some(ds.class_counts(rows)[1] as f64 / rows.len() as f64)
}

/// Empirical P(Y=1 | X in C) on `rows`; `None` when no row falls in C.
pub fn empirical_set_prob<C>(ds: &Dataset, rows: &[usize], member: C) -> Option<f64>
where
    C: Fn(&[u8]) -> bool,
{
    let (mut inside, mut cases) = (0usize, 0usize);
    for &j in rows {
        if member(ds.row(j)) {
            inside += 1;
            cases += usize::from(ds.label(j) == Label::Case);
        }
    }
    (inside > 0).then(|| cases as f64 / inside as f64)
}

/// Empirical P(Y=1 | X = x) on `rows`; `None` when no row equals `x`.
pub fn empirical_cell_prob(ds: &Dataset, rows: &[usize], x: &[u8]) -> Option<f64> {
    empirical_set_prob(ds, rows, |row| row == x)
}

/// Per class (control, case): `[misclassified, total]` on `rows`.
pub fn class_miss_counts<P: Predictor + ?Sized>(f: &P, ds: &Dataset, rows: &[usize]) -> Result<[[u64; 2]; 2]> {
    let counts = ds.require_both_classes(rows, "balanced error")?;
    let mut misses = [0u64; 2];
    for &j in rows {
        let y = ds.label(j);
        if f.predict(ds.row(j)) != y {
            misses[y.index()] += 1;
        }
    }
    Ok([[misses[0], counts[0] as u64], [misses[1], counts[1] as u64]])
}

fn rates(counts: &[[u64; 2]; 2]) -> [f64; 2] {
    [counts[0][0] as f64 / counts[0][1] as f64, counts[1][0] as f64 / counts[1][1] as f64]
}

/// Per-class miss rates `[P(f=+1 | Y=-1), P(f=-1 | Y=+1)]` on `rows`.
pub fn class_miss_rates<P: Predictor + ?Sized>(f: &P, ds: &Dataset, rows: &[usize]) -> Result<[f64; 2]> {
    Ok(rates(&class_miss_counts(f, ds, rows)?))
}

/// Balanced error: half the false-positive rate among controls plus half the
/// false-negative rate among cases.
pub fn balanced_error<P: Predictor + ?Sized>(f: &P, ds: &Dataset, rows: &[usize]) -> Result<f64> {
    let [fp, fneg] = class_miss_rates(f, ds, rows)?;
    Ok(0.5 * fp + 0.5 * fneg)
}

/// The optimal rule `x -> +1 iff p(x) > threshold`, with undefined `p(x)`
/// classifying as control.
#[derive(Debug, Clone)]
pub struct ThresholdRule<F> {
    prob: F,
    threshold: f64,
}

impl<F> Predictor for ThresholdRule<F>
where
    F: Fn(&[u8]) -> Option<f64> + Send + Sync,
{
    fn predict(&self, x: &[u8]) -> Label {
        match (self.prob)(x) {
            Some(p) if p > self.threshold => Label::Case,
            _ => Label::Control,
        }
    }
}

pub fn optimal_rule<F>(prob: F, prevalence: f64) -> Result<ThresholdRule<F>>
where
    F: Fn(&[u8]) -> Option<f64> + Send + Sync,
{
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::param("prevalence must lie strictly between 0 and 1"));
    }
    Ok(ThresholdRule { prob, threshold: prevalence })
}

/// Cross-validated balanced error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvError {
    pub value: f64,
    /// Per fold: `[control miss rate, case miss rate]` on the held-out rows.
    pub per_fold: Vec<[f64; 2]>,
    pub k: usize,
}

impl CvError {
    /// Combine per-fold class miss rates: average over folds per class, then
    /// over the two classes. Sums run in fold order with compensation.
    pub fn from_fold_rates(per_fold: Vec<[f64; 2]>) -> CvError {
        let k = per_fold.len();
        let mut sums = [CompensatedSum::default(); 2];
        for rates in &per_fold {
            sums[0].add(rates[0]);
            sums[1].add(rates[1]);
        }
        let value = 0.5 * (sums[0].value() / k as f64) + 0.5 * (sums[1].value() / k as f64);
        CvError { value, per_fold, k }
    }

    /// Combine per-fold `[misclassified, total]` counts per class. The mean
    /// is formed as a reduced fraction when it fits in 128 bits, so equal
    /// errors always give equal floats; otherwise as [`Self::from_fold_rates`].
    pub fn from_fold_counts(per_fold: &[[[u64; 2]; 2]]) -> CvError {
        let rates_per_fold: Vec<[f64; 2]> = per_fold.iter().map(rates).collect();
        let exact = || -> Option<f64> {
            let (mut num, mut den) = (0u128, 1u128);
            for counts in per_fold {
                for &[m, c] in counts {
                    let (m, c) = (u128::from(m), u128::from(c));
                    let g = gcd(den, c);
                    num = num.checked_mul(c / g)?.checked_add(m.checked_mul(den / g)?)?;
                    den = den.checked_mul(c / g)?;
                    let r = gcd(num, den);
                    (num, den) = (num / r, den / r);
                }
            }
            let den = den.checked_mul(2 * per_fold.len() as u128)?;
            let r = gcd(num, den);
            Some((num / r) as f64 / (den / r) as f64)
        };
        match exact() {
            Some(value) => CvError { value, per_fold: rates_per_fold, k: per_fold.len() },
            None => CvError::from_fold_rates(rates_per_fold),
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Check that every fold and every training complement holds both classes.
pub fn check_plan(ds: &Dataset, plan: &FoldPlan) -> Result<()> {
    if plan.n_rows() != ds.n_rows() {
        return Err(Error::param("fold plan and dataset differ in row count"));
    }
    let total = ds.class_counts(&ds.all_rows());
    for (k, fold) in plan.folds().iter().enumerate() {
        let inside = ds.class_counts(fold);
        if inside[0] == 0 || inside[1] == 0 {
            return Err(Error::DegenerateFold { fold: k, part: FoldPart::Test });
        }
        if inside[0] == total[0] || inside[1] == total[1] {
            return Err(Error::DegenerateFold { fold: k, part: FoldPart::Training });
        }
    }
    Ok(())
}

/// K-fold error where `fit_fold(k, training_rows)` supplies the predictor
/// scored on fold `k`. Folds may run in parallel; the reduction is in fold
/// order.
pub fn cv_error_with<P, F>(ds: &Dataset, plan: &FoldPlan, fit_fold: F) -> Result<CvError>
where
    P: Predictor,
    F: Fn(usize, &[usize]) -> Result<P> + Sync + Send,
{
    check_plan(ds, plan)?;
    let per_fold = par::try_map_indexed(plan.k(), |k| {
        let training = plan.complement(k);
        let model = fit_fold(k, &training)?;
        class_miss_counts(&model, ds, plan.fold(k))
    })?;
    Ok(CvError::from_fold_counts(&per_fold))
}

/// K-fold cross-validated balanced error of a learner: train on the
/// complement of each fold, score class miss rates on the fold.
pub fn cv_error<L: Learner + ?Sized>(learner: &L, ds: &Dataset, plan: &FoldPlan, seed: u64) -> Result<CvError> {
    cv_error_with(ds, plan, |k, training| learner.fit(ds, training, derive_seed(seed, STREAM_CV, k as u64)))
}
