//! Multifactor dimensionality reduction.
//!
//! For a factor combination `k_1 < ... < k_r` every one of the `3^r`
//! multilocus cells is labeled high risk (+1) or low risk (-1):
//!
//! - classic: +1 iff the empirical case rate of the cell exceeds the
//!   marginal case rate of the training rows;
//! - independent rule: +1 iff the product of per-factor class-conditional
//!   frequencies among cases exceeds the same product among controls.
//!
//! [`mdr_search`] scores every combination of the requested orders by
//! cross-validated balanced error and ranks them.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan, Label};
use crate::metrics::{self, CvError, Learner, Predictor};
use crate::{par, Error, Result};

/// Sorted, distinct predictor indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorCombo(Vec<usize>);

impl FactorCombo {
    pub fn new(mut indices: Vec<usize>, n_predictors: usize) -> Result<FactorCombo> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::param("factor combination is empty"));
        }
        if indices.last().is_some_and(|&i| i >= n_predictors) {
            return Err(Error::param(format!("factor index out of range for {n_predictors} predictors")));
        }
        Ok(FactorCombo(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn n_cells(&self) -> usize {
        3usize.pow(self.0.len() as u32)
    }

    /// Cell of `x`, first factor most significant: sum of x[k_i] 3^(r-1-i).
    pub fn cell_index(&self, x: &[u8]) -> usize {
        self.0.iter().fold(0, |acc, &k| acc * 3 + usize::from(x[k]))
    }

    pub fn names(&self, ds: &Dataset) -> Vec<String> {
        self.0.iter().map(|&k| ds.names()[k].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdrVariant {
    #[default]
    Classic,
    IndependentRule,
}

/// Pseudo-counts for the independent-rule per-factor frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to every level count (three levels per factor).
    AddOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdrModel {
    pub combo: FactorCombo,
    pub variant: MdrVariant,
    /// One label per cell, indexed by [`FactorCombo::cell_index`].
    pub cells: Vec<Label>,
    /// Marginal case rate of the training rows.
    pub threshold: f64,
}

impl Predictor for MdrModel {
    fn predict(&self, x: &[u8]) -> Label {
        self.cells[self.combo.cell_index(x)]
    }

    fn describe(&self) -> String {
        let high: Vec<usize> = (0..self.cells.len()).filter(|&c| self.cells[c] == Label::Case).collect();
        format!("{:?} over factors {:?}, high-risk cells {:?}", self.variant, self.combo.indices(), high)
    }
}

/// Classic MDR rule fitted on `rows`.
pub fn fit_mdr(ds: &Dataset, rows: &[usize], combo: &FactorCombo) -> Result<MdrModel> {
    let totals = ds.require_both_classes(rows, "MDR fit")?;
    let n_cells = combo.n_cells();
    let mut cases = alloc::vec![0u64; n_cells];
    let mut inside = alloc::vec![0u64; n_cells];
    for &j in rows {
        let c = combo.cell_index(ds.row(j));
        inside[c] += 1;
        cases[c] += u64::from(ds.label(j) == Label::Case);
    }
    // cases_c / inside_c > cases_S / |S|, compared exactly in integers;
    // empty cells fail the comparison.
    let n = rows.len() as u128;
    let case_total = totals[1] as u128;
    let cells = (0..n_cells)
        .map(|c| {
            if inside[c] > 0 && u128::from(cases[c]) * n > u128::from(inside[c]) * case_total {
                Label::Case
            } else {
                Label::Control
            }
        })
        .collect();
    Ok(MdrModel {
        combo: combo.clone(),
        variant: MdrVariant::Classic,
        cells,
        threshold: case_total as f64 / n as f64,
    })
}

/// Independent-rule MDR fitted on `rows`.
pub fn fit_mdrir(ds: &Dataset, rows: &[usize], combo: &FactorCombo, smoothing: Smoothing) -> Result<MdrModel> {
    let totals = ds.require_both_classes(rows, "MDRIR fit")?;
    let r = combo.order();
    // level_counts[i][class][level]
    let mut level_counts = alloc::vec![[[0u64; 3]; 2]; r];
    for &j in rows {
        let x = ds.row(j);
        let y = ds.label(j).index();
        for (i, &k) in combo.indices().iter().enumerate() {
            level_counts[i][y][usize::from(x[k])] += 1;
        }
    }
    let pseudo: u64 = match smoothing {
        Smoothing::None => 0,
        Smoothing::AddOne => 1,
    };
    let denom = [totals[0] as u64 + 3 * pseudo, totals[1] as u64 + 3 * pseudo];

    let n_cells = combo.n_cells();
    let mut levels = alloc::vec![0usize; r];
    let cells = (0..n_cells)
        .map(|c| {
            let mut rest = c;
            for slot in levels.iter_mut().rev() {
                *slot = rest % 3;
                rest /= 3;
            }
            let num = |class: usize| -> Vec<u64> {
                levels.iter().enumerate().map(|(i, &l)| level_counts[i][class][l] + pseudo).collect()
            };
            if independent_rule_favors_case(&num(1), denom[1], &num(0), denom[0]) {
                Label::Case
            } else {
                Label::Control
            }
        })
        .collect();
    Ok(MdrModel {
        combo: combo.clone(),
        variant: MdrVariant::IndependentRule,
        cells,
        threshold: totals[1] as f64 / rows.len() as f64,
    })
}

/// Whether prod(case_num / case_den) > prod(ctrl_num / ctrl_den).
///
/// Cross-multiplied in 128-bit integers when that cannot overflow, which
/// makes ties exact; otherwise compared as sums of logarithms.
fn independent_rule_favors_case(case_num: &[u64], case_den: u64, ctrl_num: &[u64], ctrl_den: u64) -> bool {
    let exact = || -> Option<bool> {
        let mut left: u128 = 1;
        let mut right: u128 = 1;
        for (&a, &b) in case_num.iter().zip(ctrl_num) {
            left = left.checked_mul(u128::from(a))?.checked_mul(u128::from(ctrl_den))?;
            right = right.checked_mul(u128::from(b))?.checked_mul(u128::from(case_den))?;
        }
        Some(left > right)
    };
    exact().unwrap_or_else(|| {
        if case_num.contains(&0) {
            return false;
        }
        if ctrl_num.contains(&0) {
            return true;
        }
        let log_sum = |nums: &[u64], den: u64| -> f64 {
            nums.iter().map(|&v| crate::math::ln(v as f64) - crate::math::ln(den as f64)).sum()
        };
        log_sum(case_num, case_den) > log_sum(ctrl_num, ctrl_den)
    })
}

/// MDR prediction algorithm for one fixed combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdrLearner {
    pub combo: FactorCombo,
    pub variant: MdrVariant,
    #[serde(default)]
    pub smoothing: Smoothing,
}

impl Learner for MdrLearner {
    type Model = MdrModel;

    fn fit(&self, ds: &Dataset, rows: &[usize], _seed: u64) -> Result<MdrModel> {
        match self.variant {
            MdrVariant::Classic => fit_mdr(ds, rows, &self.combo),
            MdrVariant::IndependentRule => fit_mdrir(ds, rows, &self.combo, self.smoothing),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdrSearchConfig {
    pub min_order: usize,
    pub max_order: usize,
    pub variant: MdrVariant,
    pub smoothing: Smoothing,
    /// Columns to draw factors from; all predictors when `None`.
    pub restrict: Option<Vec<usize>>,
    /// Refuse searches needing more than this many cell updates
    /// (combinations x folds x rows).
    pub max_cell_updates: u128,
}

impl Default for MdrSearchConfig {
    fn default() -> Self {
        MdrSearchConfig {
            min_order: 1,
            max_order: 4,
            variant: MdrVariant::Classic,
            smoothing: Smoothing::None,
            restrict: None,
            max_cell_updates: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCombo {
    pub combo: FactorCombo,
    pub cv: CvError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdrSearchReport {
    /// Best first; equal errors ordered lexicographically by factor indices.
    pub ranked: Vec<RankedCombo>,
    pub search_space: u128,
    pub cell_updates: u128,
}

impl MdrSearchReport {
    pub fn best(&self) -> &RankedCombo {
        &self.ranked[0]
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// All `r`-subsets of `pool` in lexicographic order of positions.
pub fn combinations(pool: &[usize], r: usize) -> Vec<Vec<usize>> {
    let m = pool.len();
    let mut out = Vec::new();
    if r == 0 || r > m {
        return out;
    }
    let mut pos: Vec<usize> = (0..r).collect();
    loop {
        out.push(pos.iter().map(|&p| pool[p]).collect());
        let Some(i) = (0..r).rev().find(|&i| pos[i] != i + m - r) else {
            return out;
        };
        pos[i] += 1;
        for t in i + 1..r {
            pos[t] = pos[t - 1] + 1;
        }
    }
}

/// Exhaustive search over every combination of orders
/// `min_order..=max_order`, each scored by K-fold balanced error.
pub fn mdr_search(ds: &Dataset, plan: &FoldPlan, cfg: &MdrSearchConfig, seed: u64) -> Result<MdrSearchReport> {
    let mut pool: Vec<usize> = match &cfg.restrict {
        Some(cols) => cols.clone(),
        None => (0..ds.n_predictors()).collect(),
    };
    pool.sort_unstable();
    pool.dedup();
    if pool.iter().any(|&i| i >= ds.n_predictors()) {
        return Err(Error::param("restricted column out of range"));
    }
    if cfg.min_order == 0 || cfg.min_order > cfg.max_order || cfg.max_order > pool.len() {
        return Err(Error::param(format!(
            "orders {}..={} invalid for {} searchable columns",
            cfg.min_order,
            cfg.max_order,
            pool.len()
        )));
    }
    let search_space: u128 = (cfg.min_order..=cfg.max_order).map(|r| binomial(pool.len(), r)).sum();
    let cell_updates = search_space * plan.k() as u128 * ds.n_rows() as u128;
    if cell_updates > cfg.max_cell_updates {
        return Err(Error::SearchTooLarge { required: cell_updates, cap: cfg.max_cell_updates });
    }
    metrics::check_plan(ds, plan)?;

    let combos: Vec<FactorCombo> = (cfg.min_order..=cfg.max_order)
        .flat_map(|r| combinations(&pool, r))
        .map(FactorCombo)
        .collect();
    let scored = par::try_map_indexed(combos.len(), |c| {
        let learner = MdrLearner { combo: combos[c].clone(), variant: cfg.variant, smoothing: cfg.smoothing };
        metrics::cv_error(&learner, ds, plan, seed)
    })?;
    let mut ranked: Vec<RankedCombo> =
        combos.into_iter().zip(scored).map(|(combo, cv)| RankedCombo { combo, cv }).collect();
    ranked.sort_by(|a, b| a.cv.value.total_cmp(&b.cv.value).then_with(|| a.combo.cmp(&b.combo)));
    Ok(MdrSearchReport { ranked, search_space, cell_updates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ds(rows: &[&[u8]], y: &[i8]) -> Dataset {
        Dataset::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), y).unwrap()
    }

    #[test]
    fn classic_cell_labels() {
        // Cell x=1: 3 cases / 1 control (0.75 > 0.5); cell x=0: 1 case / 3
        // controls; cell x=2 is empty.
        let d = ds(&[&[1], &[1], &[1], &[1], &[0], &[0], &[0], &[0]], &[1, 1, 1, -1, 1, -1, -1, -1]);
        let m = fit_mdr(&d, &d.all_rows(), &FactorCombo::new(vec![0], 1).unwrap()).unwrap();
        assert_eq!(m.threshold, 0.5);
        assert_eq!(m.cells, vec![Label::Control, Label::Case, Label::Control]);
    }

    #[test]
    fn classic_tie_with_marginal_is_control() {
        let d = ds(&[&[1], &[1], &[0], &[0]], &[1, -1, 1, -1]);
        let m = fit_mdr(&d, &d.all_rows(), &FactorCombo::new(vec![0], 1).unwrap()).unwrap();
        assert!(m.cells.iter().all(|&l| l == Label::Control));
    }

    #[test]
    fn independent_rule_single_factor() {
        // Cases: level 2 in 3 of 5 (0.6); controls: level 2 in 1 of 5 (0.2).
        let d = ds(
            &[&[2], &[2], &[2], &[0], &[1], &[2], &[0], &[0], &[1], &[1]],
            &[1, 1, 1, 1, 1, -1, -1, -1, -1, -1],
        );
        let m = fit_mdrir(&d, &d.all_rows(), &FactorCombo::new(vec![0], 1).unwrap(), Smoothing::None).unwrap();
        assert_eq!(m.cells[2], Label::Case);
        // level 0: 1/5 vs 2/5, level 1: 1/5 vs 2/5
        assert_eq!(m.cells[0], Label::Control);
        assert_eq!(m.cells[1], Label::Control);
    }

    #[test]
    fn independent_rule_zero_products_tie_to_control() {
        // Level 2 never occurs: both products are zero.
        let d = ds(&[&[0], &[1], &[0], &[1]], &[1, 1, -1, -1]);
        let m = fit_mdrir(&d, &d.all_rows(), &FactorCombo::new(vec![0], 1).unwrap(), Smoothing::None).unwrap();
        assert_eq!(m.cells[2], Label::Control);
        let smoothed =
            fit_mdrir(&d, &d.all_rows(), &FactorCombo::new(vec![0], 1).unwrap(), Smoothing::AddOne).unwrap();
        assert_eq!(smoothed.cells[2], Label::Control);
    }

    #[test]
    fn combination_enumeration() {
        assert_eq!(combinations(&[0, 1, 2, 3], 2).len(), 6);
        assert_eq!(combinations(&[3, 5, 7], 2), vec![vec![3, 5], vec![3, 7], vec![5, 7]]);
        assert_eq!(binomial(10, 2), 45);
    }

    #[test]
    fn search_counts_and_cap() {
        let rows: Vec<Vec<u8>> = (0..24).map(|j| vec![(j % 3) as u8, (j / 3 % 3) as u8, (j / 6 % 3) as u8, (j % 2) as u8, 1]).collect();
        let y: Vec<i8> = (0..24).map(|j| if j % 2 == 0 { 1 } else { -1 }).collect();
        let d = Dataset::from_rows(&rows, &y).unwrap();
        let plan = FoldPlan::contiguous(24, 3).unwrap();
        let cfg = MdrSearchConfig { max_order: 2, restrict: Some(vec![0, 1, 2, 3]), ..Default::default() };
        let report = mdr_search(&d, &plan, &cfg, 0).unwrap();
        assert_eq!(report.ranked.len(), 10);
        assert_eq!(report.search_space, 10);
        assert!(report.ranked.windows(2).all(|w| w[0].cv.value <= w[1].cv.value));
        // Column 3 is the phenotype parity, so every combination containing it
        // is perfect; equal errors rank lexicographically.
        assert_eq!(report.best().combo.indices(), &[0, 3]);
        let perfect: Vec<&[usize]> =
            report.ranked.iter().filter(|c| c.cv.value == 0.0).map(|c| c.combo.indices()).collect();
        assert_eq!(perfect, vec![&[0, 3][..], &[1, 3], &[2, 3], &[3]]);
        assert_eq!(report.best().cv.value, 0.0);

        let tight = MdrSearchConfig { max_cell_updates: 100, ..cfg };
        assert!(matches!(mdr_search(&d, &plan, &tight, 0), Err(Error::SearchTooLarge { required: 720, .. })));
    }
}
