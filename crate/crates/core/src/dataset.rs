//! Ternary predictor matrix with a case/control phenotype, fold plans and
//! class-balancing resampling.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Deref;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{self, STREAM_BALANCE, STREAM_FOLDS};
use crate::{Error, Result};

/// Phenotype of one individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Healthy, coded -1.
    Control,
    /// Diseased, coded +1.
    Case,
}

impl Label {
    pub fn from_sign(value: i8) -> Option<Label> {
        match value {
            -1 => Some(Label::Control),
            1 => Some(Label::Case),
            _ => None,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Control => -1,
            Label::Case => 1,
        }
    }

    pub fn sign(self) -> f64 {
        f64::from(self.as_i8())
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Control => Label::Case,
            Label::Case => Label::Control,
        }
    }

    /// Position in `[controls, cases]` count arrays.
    pub fn index(self) -> usize {
        match self {
            Label::Control => 0,
            Label::Case => 1,
        }
    }

    pub const BOTH: [Label; 2] = [Label::Control, Label::Case];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Genetic,
    External,
}

/// N individuals by n ternary predictors plus phenotype.
///
/// Immutable once built; all derived datasets (permuted phenotype, permuted
/// column, resampled rows) are fresh values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_predictors: usize,
    cells: Vec<u8>,
    labels: Vec<Label>,
    names: Vec<String>,
    kinds: Vec<PredictorKind>,
}

impl Dataset {
    /// `cells` is row-major with `n_predictors` values per row.
    pub fn new(
        cells: Vec<u8>,
        n_predictors: usize,
        labels: Vec<Label>,
        names: Vec<String>,
        kinds: Vec<PredictorKind>,
    ) -> Result<Dataset> {
        if n_predictors == 0 {
            return Err(Error::param("dataset needs at least one predictor"));
        }
        if labels.is_empty() {
            return Err(Error::param("dataset needs at least one row"));
        }
        if cells.len() != labels.len() * n_predictors {
            return Err(Error::param(format!(
                "{} cells do not form {} rows of {} predictors",
                cells.len(),
                labels.len(),
                n_predictors
            )));
        }
        if names.len() != n_predictors || kinds.len() != n_predictors {
            return Err(Error::param("one name and one kind per predictor required"));
        }
        if let Some(pos) = cells.iter().position(|&v| v > 2) {
            return Err(Error::NonTernary {
                row: pos / n_predictors,
                column: pos % n_predictors,
                value: cells[pos],
            });
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::DuplicateName(name.clone()));
            }
        }
        Ok(Dataset { n_predictors, cells, labels, names, kinds })
    }

    /// Rows of ternary codes and phenotypes in {-1, +1}; predictors are named
    /// `x1..xn` and tagged genetic.
    pub fn from_rows(rows: &[Vec<u8>], phenotype: &[i8]) -> Result<Dataset> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.len() != phenotype.len() {
            return Err(Error::param("one phenotype per row required"));
        }
        let mut cells = Vec::with_capacity(rows.len() * n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::param(format!("row {j} has {} values, expected {n}", row.len())));
            }
            cells.extend_from_slice(row);
        }
        let labels = phenotype
            .iter()
            .enumerate()
            .map(|(row, &value)| Label::from_sign(value).ok_or(Error::InvalidLabel { row, value }))
            .collect::<Result<Vec<_>>>()?;
        let names = (1..=n).map(|i| format!("x{i}")).collect();
        Dataset::new(cells, n, labels, names, alloc::vec![PredictorKind::Genetic; n])
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.cells[j * self.n_predictors..(j + 1) * self.n_predictors]
    }

    pub fn value(&self, j: usize, i: usize) -> u8 {
        self.cells[j * self.n_predictors + i]
    }

    pub fn label(&self, j: usize) -> Label {
        self.labels[j]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[PredictorKind] {
        &self.kinds
    }

    pub fn column(&self, i: usize) -> Vec<u8> {
        (0..self.n_rows()).map(|j| self.value(j, i)).collect()
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }

    /// `[controls, cases]` among `rows` (with multiplicity).
    pub fn class_counts(&self, rows: &[usize]) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for &j in rows {
            counts[self.labels[j].index()] += 1;
        }
        counts
    }

    /// Class counts, or an error when either class is absent.
    pub fn require_both_classes(&self, rows: &[usize], context: &str) -> Result<[usize; 2]> {
        let counts = self.class_counts(rows);
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::single_class(context));
        }
        Ok(counts)
    }

    /// Same predictors with a replacement phenotype vector.
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Dataset> {
        if labels.len() != self.n_rows() {
            return Err(Error::param("phenotype length does not match row count"));
        }
        Ok(Dataset { labels, ..self.clone() })
    }

    /// Same data with column `i` replaced.
    pub fn with_column(&self, i: usize, values: &[u8]) -> Result<Dataset> {
        if i >= self.n_predictors || values.len() != self.n_rows() {
            return Err(Error::param("replacement column has the wrong shape"));
        }
        let mut out = self.clone();
        for (j, &v) in values.iter().enumerate() {
            if v > 2 {
                return Err(Error::NonTernary { row: j, column: i, value: v });
            }
            out.cells[j * self.n_predictors + i] = v;
        }
        Ok(out)
    }

    /// New dataset made of the given rows in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::param("row selection is empty"));
        }
        let mut cells = Vec::with_capacity(rows.len() * self.n_predictors);
        let mut labels = Vec::with_capacity(rows.len());
        for &j in rows {
            if j >= self.n_rows() {
                return Err(Error::param(format!("row index {j} out of range")));
            }
            cells.extend_from_slice(self.row(j));
            labels.push(self.labels[j]);
        }
        Ok(Dataset { cells, labels, ..self.clone() })
    }

    /// Keep only the listed predictor columns, in the listed order.
    pub fn select_predictors(&self, columns: &[usize]) -> Result<Dataset> {
        if columns.is_empty() || columns.iter().any(|&i| i >= self.n_predictors) {
            return Err(Error::param("invalid predictor selection"));
        }
        let mut cells = Vec::with_capacity(self.n_rows() * columns.len());
        for j in 0..self.n_rows() {
            cells.extend(columns.iter().map(|&i| self.value(j, i)));
        }
        Dataset::new(
            cells,
            columns.len(),
            self.labels.clone(),
            columns.iter().map(|&i| self.names[i].clone()).collect(),
            columns.iter().map(|&i| self.kinds[i]).collect(),
        )
    }
}

/// A subsample of row indices. Bootstrap samples repeat indices; every
/// statistic treats a repeated index as a repeated observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsample(Vec<usize>);

impl Subsample {
    pub fn new(ds: &Dataset, rows: Vec<usize>) -> Result<Subsample> {
        if rows.is_empty() {
            return Err(Error::param("subsample is empty"));
        }
        if let Some(&bad) = rows.iter().find(|&&j| j >= ds.n_rows()) {
            return Err(Error::param(format!("row index {bad} out of range")));
        }
        Ok(Subsample(rows))
    }

    pub fn full(ds: &Dataset) -> Subsample {
        Subsample(ds.all_rows())
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for Subsample {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// K disjoint folds covering all rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    n_rows: usize,
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Contiguous blocks: fold k (1-based) holds rows (k-1)[N/K]+1 ..= k[N/K],
    /// the last fold running to N. Indices here are 0-based.
    pub fn contiguous(n_rows: usize, k: usize) -> Result<FoldPlan> {
        if k == 0 || k > n_rows {
            return Err(Error::param(format!("fold count {k} must lie in 1..={n_rows}")));
        }
        let block = n_rows / k;
        let folds = (0..k)
            .map(|f| {
                let end = if f + 1 < k { (f + 1) * block } else { n_rows };
                (f * block..end).collect()
            })
            .collect();
        Ok(FoldPlan { n_rows, folds })
    }

    /// Contiguous blocks over a seeded uniform permutation of the rows.
    pub fn shuffled(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
        let n = ds.n_rows();
        let mut plan = FoldPlan::contiguous(n, k)?;
        let perm = rng::permutation(n, &mut rng::derived_rng(seed, STREAM_FOLDS, 0));
        for fold in &mut plan.folds {
            for j in fold.iter_mut() {
                *j = perm[*j];
            }
            fold.sort_unstable();
        }
        Ok(plan)
    }

    /// Arbitrary folds; they must partition `0..n_rows` and be nonempty.
    pub fn from_folds(n_rows: usize, folds: Vec<Vec<usize>>) -> Result<FoldPlan> {
        if folds.is_empty() || folds.iter().any(Vec::is_empty) {
            return Err(Error::param("folds must be nonempty"));
        }
        let mut seen = alloc::vec![false; n_rows];
        for &j in folds.iter().flatten() {
            if j >= n_rows || seen[j] {
                return Err(Error::param(format!("row {j} is out of range or in two folds")));
            }
            seen[j] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::param("folds do not cover every row"));
        }
        Ok(FoldPlan { n_rows, folds })
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn fold(&self, k: usize) -> &[usize] {
        &self.folds[k]
    }

    /// Rows outside fold `k`, ascending.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        let mut inside = alloc::vec![false; self.n_rows];
        for &j in &self.folds[k] {
            inside[j] = true;
        }
        (0..self.n_rows).filter(|&j| !inside[j]).collect()
    }
}

/// Contiguous-block folds over rows in file order.
pub fn make_folds(n_rows: usize, k: usize) -> Result<FoldPlan> {
    FoldPlan::contiguous(n_rows, k)
}

/// Contiguous-block folds after a seeded shuffle of the rows.
pub fn shuffle_then_fold(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    FoldPlan::shuffled(ds, k, seed)
}

/// Augment the smaller class with bootstrap draws from itself until both
/// classes have equal counts. Original rows keep their order and come first.
pub fn balance_resample(ds: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = ds.require_both_classes(&ds.all_rows(), "class-balancing resample")?;
    let minority = if counts[0] < counts[1] { Label::Control } else { Label::Case };
    let deficit = counts[1 - minority.index()] - counts[minority.index()];
    let pool: Vec<usize> = (0..ds.n_rows()).filter(|&j| ds.label(j) == minority).collect();
    let mut rng = rng::derived_rng(seed, STREAM_BALANCE, 0);
    let mut rows = ds.all_rows();
    rows.extend((0..deficit).map(|_| pool[rng.random_range(0..pool.len())]));
    ds.select_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy() -> Dataset {
        Dataset::from_rows(
            &[vec![0, 1], vec![2, 2], vec![1, 0], vec![0, 0], vec![1, 1], vec![2, 0], vec![0, 2], vec![1, 2]],
            &[1, 1, 1, -1, -1, -1, -1, -1],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_ternary_with_location() {
        let err = Dataset::from_rows(&[vec![0, 1], vec![3, 0]], &[1, -1]).unwrap_err();
        assert_eq!(err, Error::NonTernary { row: 1, column: 0, value: 3 });
    }

    #[test]
    fn rejects_bad_label_and_duplicate_names() {
        let err = Dataset::from_rows(&[vec![0]], &[0]).unwrap_err();
        assert_eq!(err, Error::InvalidLabel { row: 0, value: 0 });
        let err = Dataset::new(
            vec![0, 0],
            2,
            vec![Label::Case],
            vec!["a".into(), "a".into()],
            vec![PredictorKind::Genetic; 2],
        )
        .unwrap_err();
        assert_eq!(err, Error::DuplicateName("a".into()));
    }

    #[test]
    fn contiguous_folds_follow_block_formula() {
        let plan = FoldPlan::contiguous(10, 3).unwrap();
        assert_eq!(plan.folds(), &[vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8, 9]]);
        let plan = FoldPlan::contiguous(6, 6).unwrap();
        assert!(plan.folds().iter().enumerate().all(|(k, f)| f == &vec![k]));
        let plan = FoldPlan::contiguous(5, 1).unwrap();
        assert_eq!(plan.folds(), &[vec![0, 1, 2, 3, 4]]);
        assert!(FoldPlan::contiguous(3, 4).is_err());
        assert!(FoldPlan::contiguous(3, 0).is_err());
    }

    #[test]
    fn fold_sizes_for_all_small_n_and_k() {
        for n in 1..=30 {
            for k in 1..=n {
                let plan = FoldPlan::contiguous(n, k).unwrap();
                let block = n / k;
                for (f, fold) in plan.folds().iter().enumerate() {
                    let expected = if f + 1 < k { block } else { n - (k - 1) * block };
                    assert_eq!(fold.len(), expected, "n={n} k={k} fold={f}");
                }
                let mut all: Vec<usize> = plan.folds().concat();
                all.sort_unstable();
                assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn shuffled_folds_are_seeded() {
        let ds = Dataset::from_rows(&vec![vec![0]; 10], &[1, -1, 1, -1, 1, -1, 1, -1, 1, -1]).unwrap();
        let a = FoldPlan::shuffled(&ds, 3, 11).unwrap();
        assert_eq!(a, FoldPlan::shuffled(&ds, 3, 11).unwrap());
        let sizes: Vec<usize> = a.folds().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 4]);
        let differs = (0..20).any(|s| FoldPlan::shuffled(&ds, 3, 100 + s).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn balance_resample_equalizes_counts() {
        let ds = toy();
        let out = balance_resample(&ds, 5).unwrap();
        assert_eq!(out.class_counts(&out.all_rows()), [5, 5]);
        assert_eq!(out.n_rows(), 10);
        for j in 0..8 {
            assert_eq!(out.row(j), ds.row(j));
        }
        for j in 8..10 {
            assert_eq!(out.label(j), Label::Case);
            assert!((0..3).any(|o| ds.row(o) == out.row(j)));
        }
        assert_eq!(out, balance_resample(&ds, 5).unwrap());
    }

    #[test]
    fn balance_resample_is_noop_when_balanced() {
        let ds = Dataset::from_rows(&[vec![0], vec![1]], &[1, -1]).unwrap();
        assert_eq!(balance_resample(&ds, 1).unwrap(), ds);
        let single = Dataset::from_rows(&[vec![0], vec![1]], &[1, 1]).unwrap();
        assert!(matches!(balance_resample(&single, 1), Err(Error::SingleClass { .. })));
    }
}
