//! Tree ensembles: random forests, stochastic gradient boosting, and the
//! conditional variable importance measure.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cart::{self, CartConfig, ClassTree};
use crate::dataset::{Dataset, FoldPlan, Label};
use crate::metrics::{self, CvError, Learner, Predictor};
use crate::rng::{self, STREAM_CVIM, STREAM_RF_RETRY, STREAM_RF_TREE, STREAM_SGB};
use crate::{math, par, Error, Result};

/// max(floor(N ln N), 1000).
pub fn default_tree_count(n: usize) -> usize {
    if n < 2 {
        return 1000;
    }
    let nf = n as f64;
    (math::floor(nf * math::ln(nf)) as usize).max(1000)
}

/// The same count under a base-10 reading, max(floor(N log10 N), 1000).
pub fn default_tree_count_log10(n: usize) -> usize {
    if n < 2 {
        return 1000;
    }
    let nf = n as f64;
    (math::floor(nf * libm::log10(nf)) as usize).max(1000)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    /// Tree count; `None` uses [`default_tree_count`] of the training size.
    pub trees: Option<usize>,
    pub tree: CartConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub trees: Vec<ClassTree>,
    /// Bootstrap rows of each tree, as dataset row indices.
    #[serde(skip)]
    pub bootstraps: Vec<Vec<usize>>,
    /// Training case fraction; the classifier predicts +1 above it.
    pub threshold: f64,
}

fn bootstrap(rows: &[usize], rng: &mut rng::Rng) -> Vec<usize> {
    (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]).collect()
}

fn single_class(ds: &Dataset, rows: &[usize]) -> bool {
    let c = ds.class_counts(rows);
    c[0] == 0 || c[1] == 0
}

pub fn fit_rf(ds: &Dataset, rows: &[usize], config: &RfConfig, seed: u64) -> Result<RfModel> {
    ds.require_both_classes(rows, "random forest training rows")?;
    config.tree.validate(ds.n_predictors())?;
    let b = config.trees.unwrap_or_else(|| default_tree_count(rows.len()));
    if b == 0 {
        return Err(Error::param("random forest needs at least one tree"));
    }
    let fitted = par::try_map_indexed(b, |t| {
        let mut rng = rng::derived_rng(seed, STREAM_RF_TREE, t as u64);
        let mut sample = bootstrap(rows, &mut rng);
        if single_class(ds, &sample) {
            rng = rng::derived_rng(seed, STREAM_RF_RETRY, t as u64);
            sample = bootstrap(rows, &mut rng);
            if single_class(ds, &sample) {
                return Err(Error::single_class(format!("bootstrap sample of tree {t}")));
            }
        }
        let tree = cart::grow_tree(ds, &sample, &config.tree, rng.random())?;
        Ok((tree, sample))
    })?;
    let (trees, bootstraps) = fitted.into_iter().unzip();
    Ok(RfModel {
        trees,
        bootstraps,
        threshold: metrics::case_fraction(ds, rows).expect("rows are nonempty"),
    })
}

/// (mean vote + 1) / 2 with votes in {-1, +1}.
pub fn rf_prob(model: &RfModel, x: &[u8]) -> f64 {
    let votes: f64 = model.trees.iter().map(|t| cart::tree_predict(t, x).sign()).sum();
    (votes / model.trees.len() as f64 + 1.0) / 2.0
}

pub fn rf_predict(model: &RfModel, x: &[u8]) -> Label {
    if rf_prob(model, x) > model.threshold {
        Label::Case
    } else {
        Label::Control
    }
}

impl Predictor for RfModel {
    fn predict(&self, x: &[u8]) -> Label {
        rf_predict(self, x)
    }

    fn describe(&self) -> String {
        format!("random forest of {} trees, threshold {}", self.trees.len(), self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RfLearner {
    pub config: RfConfig,
}

impl Learner for RfLearner {
    type Model = RfModel;

    fn fit(&self, ds: &Dataset, rows: &[usize], seed: u64) -> Result<RfModel> {
        fit_rf(ds, rows, &self.config, seed)
    }
}

/// Rows over which boosting leaf weights are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRows {
    /// Every training row falling in the leaf.
    #[default]
    Full,
    /// Only the stage's subsample rows.
    Subsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgbConfig {
    /// Leaves per stage tree (D).
    pub leaves: usize,
    /// Stage count (M).
    pub stages: usize,
    /// Memory relaxation.
    pub rho: f64,
    /// Subsample fraction.
    pub eta: f64,
    pub weight_rows: WeightRows,
    /// Smallest child a stage split may create.
    pub min_node: usize,
    pub criterion: cart::SplitCriterion,
    /// Classifier threshold on the probability; `None` uses the training
    /// case fraction.
    pub threshold: Option<f64>,
}

impl Default for SgbConfig {
    fn default() -> Self {
        SgbConfig {
            leaves: 4,
            stages: 500,
            rho: 0.1,
            eta: 0.5,
            weight_rows: WeightRows::Full,
            min_node: 5,
            criterion: cart::SplitCriterion::Weighted,
            threshold: None,
        }
    }
}

/// One boosting stage: a tree and a weight per node (zero at split nodes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgbStage {
    pub tree: ClassTree,
    pub weights: Vec<f64>,
}

/// Bound on |f|; the log-odds 2f stays within [-30, 30].
pub const F_CLAMP: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgbModel {
    pub f0: f64,
    pub stages: Vec<SgbStage>,
    pub rho: f64,
    pub eta: f64,
    pub leaves: usize,
    pub threshold: f64,
    /// Mean ln(1 + exp(-2 y f)) over the training rows after each stage,
    /// starting with f0.
    pub stage_losses: Vec<f64>,
    /// Training rows whose final |f| exceeded the clamp.
    pub clamped_rows: usize,
}

/// Pseudo-response 2y / (1 + exp(2 y f)).
pub fn pseudo_response(y: Label, f: f64) -> f64 {
    let y = y.sign();
    2.0 * y / (1.0 + math::exp(2.0 * y * f))
}

fn logistic_loss(ds: &Dataset, rows: &[usize], f: &[f64]) -> f64 {
    let mut sum = math::CompensatedSum::default();
    for (k, &j) in rows.iter().enumerate() {
        sum.add(math::softplus(-2.0 * ds.label(j).sign() * f[k]));
    }
    sum.value() / rows.len() as f64
}

impl SgbConfig {
    pub fn validate(&self, n_rows: usize) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::param("stage count M must be at least 1"));
        }
        if self.leaves == 0 {
            return Err(Error::param("leaves per stage must be at least 1"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::param("rho must be in (0, 1]"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param("eta must be in (0, 1]"));
        }
        let sub = self.subsample_size(n_rows);
        if sub < 2 * self.leaves {
            return Err(Error::param(format!(
                "subsample of {sub} rows is below twice the leaf count {}",
                self.leaves
            )));
        }
        Ok(())
    }

    fn subsample_size(&self, n_rows: usize) -> usize {
        math::floor(self.eta * n_rows as f64) as usize
    }
}

pub fn fit_sgb(ds: &Dataset, rows: &[usize], config: &SgbConfig, seed: u64) -> Result<SgbModel> {
    config.validate(rows.len())?;
    let counts = ds.require_both_classes(rows, "boosting training rows")?;
    let p = counts[1] as f64 / rows.len() as f64;
    let f0 = 0.5 * math::ln(p / (1.0 - p));
    let tree_config = CartConfig {
        d_max: config.leaves,
        min_node: config.min_node,
        mtry: None,
        criterion: config.criterion,
    };
    let k = config.subsample_size(rows.len());

    let mut f = vec![f0; rows.len()];
    let mut stage_losses = vec![logistic_loss(ds, rows, &f)];
    let mut stages = Vec::with_capacity(config.stages);
    for m in 0..config.stages {
        let ybar: Vec<f64> = rows.iter().zip(&f).map(|(&j, &fj)| pseudo_response(ds.label(j), fj)).collect();
        let mut rng = rng::derived_rng(seed, STREAM_SGB, m as u64);
        let mut chosen = rand::seq::index::sample(&mut rng, rows.len(), k).into_vec();
        chosen.sort_unstable();
        let sub_rows: Vec<usize> = chosen.iter().map(|&c| rows[c]).collect();
        // the sign of the pseudo-response is always the label's sign
        let targets: Vec<Label> = sub_rows.iter().map(|&j| ds.label(j)).collect();
        let sub_weights: Vec<f64> = chosen.iter().map(|&c| ybar[c].abs()).collect();
        let tree = cart::grow_weighted(ds, &sub_rows, &targets, &sub_weights, &tree_config, rng.random())?;

        let mut num = vec![0.0; tree.nodes().len()];
        let mut den = vec![0.0; tree.nodes().len()];
        let mut add = |c: usize| {
            let leaf = tree.leaf_of(ds.row(rows[c]));
            let a = ybar[c].abs();
            num[leaf] += ybar[c];
            den[leaf] += a * (2.0 - a);
        };
        match config.weight_rows {
            WeightRows::Full => (0..rows.len()).for_each(&mut add),
            WeightRows::Subsample => chosen.iter().copied().for_each(&mut add),
        }
        let weights: Vec<f64> = num.iter().zip(&den).map(|(n, d)| if *d < 1e-12 { 0.0 } else { n / d }).collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("boosting leaf weight"));
        }
        for (c, &j) in rows.iter().enumerate() {
            f[c] += config.rho * weights[tree.leaf_of(ds.row(j))];
        }
        stage_losses.push(logistic_loss(ds, rows, &f));
        stages.push(SgbStage { tree, weights });
    }
    Ok(SgbModel {
        f0,
        stages,
        rho: config.rho,
        eta: config.eta,
        leaves: config.leaves,
        threshold: config.threshold.unwrap_or(p),
        stage_losses,
        clamped_rows: f.iter().filter(|v| v.abs() > F_CLAMP).count(),
    })
}

/// Staged sum f_M(x), unclamped.
pub fn sgb_raw(model: &SgbModel, x: &[u8]) -> f64 {
    let mut f = model.f0;
    for stage in &model.stages {
        f += model.rho * stage.weights[stage.tree.leaf_of(x)];
    }
    f
}

/// 1 / (1 + exp(-2 f_M(x))) with f_M clamped to [-15, 15].
pub fn sgb_prob(model: &SgbModel, x: &[u8]) -> f64 {
    let f = sgb_raw(model, x).clamp(-F_CLAMP, F_CLAMP);
    math::sigmoid(2.0 * f)
}

pub fn sgb_predict(model: &SgbModel, x: &[u8], threshold: f64) -> Label {
    if sgb_prob(model, x) > threshold {
        Label::Case
    } else {
        Label::Control
    }
}

impl Predictor for SgbModel {
    fn predict(&self, x: &[u8]) -> Label {
        sgb_predict(self, x, self.threshold)
    }

    fn describe(&self) -> String {
        format!(
            "boosting: {} stages of {} leaves, rho {}, eta {}, f0 {}",
            self.stages.len(),
            self.leaves,
            self.rho,
            self.eta,
            self.f0
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SgbLearner {
    pub config: SgbConfig,
}

impl Learner for SgbLearner {
    type Model = SgbModel;

    fn fit(&self, ds: &Dataset, rows: &[usize], seed: u64) -> Result<SgbModel> {
        fit_sgb(ds, rows, &self.config, seed)
    }
}

/// Cross-validated error of each boosting configuration, in input order.
pub fn sgb_grid(ds: &Dataset, plan: &FoldPlan, configs: &[SgbConfig], seed: u64) -> Result<Vec<CvError>> {
    par::try_map_indexed(configs.len(), |c| metrics::cv_error(&SgbLearner { config: configs[c] }, ds, plan, seed))
}

/// Pearson chi-square test of independence on a 3x3 table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Test independence of two ternary columns. Empty rows and columns of the
/// table are dropped, so df is (r-1)(c-1) over the observed levels; with a
/// single level on either side there is nothing to test and p = 1.
pub fn chi_square(a: &[u8], b: &[u8]) -> ChiSquare {
    let mut table = [[0u64; 3]; 3];
    for (&u, &v) in a.iter().zip(b) {
        table[u as usize][v as usize] += 1;
    }
    let rows: Vec<u64> = (0..3).map(|i| table[i].iter().sum()).collect();
    let cols: Vec<u64> = (0..3).map(|j| (0..3).map(|i| table[i][j]).sum()).collect();
    let r = rows.iter().filter(|&&c| c > 0).count();
    let c = cols.iter().filter(|&&c| c > 0).count();
    if r < 2 || c < 2 {
        return ChiSquare { statistic: 0.0, df: 0, p_value: 1.0 };
    }
    let n = a.len() as f64;
    let mut x = 0.0;
    for i in (0..3).filter(|&i| rows[i] > 0) {
        for j in (0..3).filter(|&j| cols[j] > 0) {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            let d = table[i][j] as f64 - expected;
            x += d * d / expected;
        }
    }
    let df = (r - 1) * (c - 1);
    ChiSquare { statistic: x, df, p_value: chi_square_sf(x, df) }
}

/// Upper tail of the chi-square law for the degrees of freedom a 3x3 table
/// can produce.
fn chi_square_sf(x: f64, df: usize) -> f64 {
    match df {
        1 => math::erfc(math::sqrt(x / 2.0)),
        2 => math::exp(-x / 2.0),
        4 => math::exp(-x / 2.0) * (1.0 + x / 2.0),
        _ => unreachable!("3x3 tables give df in {{1, 2, 4}}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvimConfig {
    pub replicates: usize,
    /// Significance level of the dependence tests building Z_i.
    pub alpha: f64,
    pub tree: CartConfig,
}

impl Default for CvimConfig {
    fn default() -> Self {
        CvimConfig { replicates: 1000, alpha: 0.05, tree: CartConfig::default() }
    }
}

/// Conditioning set of one predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub peers: Vec<usize>,
    /// Too many strata: reduced to the single most dependent peer.
    pub fallback: bool,
}

/// Peers whose independence from predictor `i` is rejected at `alpha`.
/// If the joint values of all such peers form more than N/2 strata, only
/// the peer with the smallest p-value is kept.
pub fn conditioning_set(ds: &Dataset, i: usize, alpha: f64) -> Conditioning {
    let xi = ds.column(i);
    let mut dependent: Vec<(usize, ChiSquare)> = (0..ds.n_predictors())
        .filter(|&k| k != i)
        .map(|k| (k, chi_square(&xi, &ds.column(k))))
        .filter(|(_, t)| t.p_value < alpha)
        .collect();
    let peers: Vec<usize> = dependent.iter().map(|d| d.0).collect();
    if strata(ds, &peers).len() * 2 > ds.n_rows() {
        dependent.sort_by(|a, b| a.1.p_value.total_cmp(&b.1.p_value).then(a.0.cmp(&b.0)));
        return Conditioning { peers: vec![dependent[0].0], fallback: true };
    }
    Conditioning { peers, fallback: false }
}

/// Rows grouped by their joint values on `columns`, groups ordered by value
/// tuple. No columns means one group of all rows.
pub fn strata(ds: &Dataset, columns: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for j in 0..ds.n_rows() {
        let key = columns.iter().map(|&c| ds.value(j, c)).collect();
        groups.entry(key).or_default().push(j);
    }
    groups.into_values().collect()
}

/// A permutation of `0..n` that maps each stratum onto itself.
pub fn within_strata_permutation(n: usize, strata: &[Vec<usize>], rng: &mut rng::Rng) -> Vec<usize> {
    let mut l: Vec<usize> = (0..n).collect();
    for group in strata {
        let perm = rng::permutation(group.len(), rng);
        for (pos, &j) in group.iter().enumerate() {
            l[j] = group[perm[pos]];
        }
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvimEntry {
    pub predictor: usize,
    pub name: String,
    pub importance: f64,
    /// Standard deviation of the per-replicate values.
    pub spread: f64,
    pub conditioning: Conditioning,
    pub strata: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvimReport {
    pub entries: Vec<CvimEntry>,
    pub replicates: usize,
    /// Replicates with a nonempty out-of-bag set.
    pub effective_replicates: usize,
}

impl CvimReport {
    /// Predictor indices by decreasing importance, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<&CvimEntry> = self.entries.iter().collect();
        order.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.predictor.cmp(&b.predictor)));
        order.iter().map(|e| e.predictor).collect()
    }
}

/// Conditional variable importance. Each replicate grows one tree on a
/// bootstrap sample; for every predictor the out-of-bag accuracy is compared
/// with the accuracy after permuting that predictor's column within the
/// strata of its conditioning set.
pub fn cvim(ds: &Dataset, config: &CvimConfig, seed: u64) -> Result<CvimReport> {
    let all = ds.all_rows();
    ds.require_both_classes(&all, "importance data")?;
    config.tree.validate(ds.n_predictors())?;
    if config.replicates == 0 {
        return Err(Error::param("at least one replicate required"));
    }
    let n = ds.n_rows();
    let p = ds.n_predictors();
    let conditioning: Vec<Conditioning> = (0..p).map(|i| conditioning_set(ds, i, config.alpha)).collect();
    let groups: Vec<Vec<Vec<usize>>> = conditioning.iter().map(|c| strata(ds, &c.peers)).collect();

    // per replicate: importance per predictor, or None if out-of-bag is empty
    let per_replicate = par::try_map_indexed(config.replicates, |b| -> Result<Option<Vec<f64>>> {
        let mut rng = rng::derived_rng(seed, STREAM_CVIM, b as u64);
        let sample = bootstrap(&all, &mut rng);
        let mut in_bag = vec![false; n];
        sample.iter().for_each(|&j| in_bag[j] = true);
        let oob: Vec<usize> = (0..n).filter(|&j| !in_bag[j]).collect();
        let tree = cart::grow_tree(ds, &sample, &config.tree, rng.random())?;
        if oob.is_empty() {
            return Ok(None);
        }
        let m = oob.len() as f64;
        let correct = oob.iter().filter(|&&j| cart::tree_predict(&tree, ds.row(j)) == ds.label(j)).count();
        let base = correct as f64 / m;
        let mut row = vec![0u8; p];
        let values = (0..p)
            .map(|i| {
                let l = within_strata_permutation(n, &groups[i], &mut rng);
                let permuted = oob
                    .iter()
                    .filter(|&&j| {
                        row.copy_from_slice(ds.row(j));
                        row[i] = ds.value(l[j], i);
                        cart::tree_predict(&tree, &row) == ds.label(j)
                    })
                    .count();
                base - permuted as f64 / m
            })
            .collect();
        Ok(Some(values))
    })?;

    let kept: Vec<&Vec<f64>> = per_replicate.iter().flatten().collect();
    let effective = kept.len();
    let entries = (0..p)
        .map(|i| {
            let values: Vec<f64> = kept.iter().map(|v| v[i]).collect();
            let (importance, spread) = mean_and_spread(&values);
            CvimEntry {
                predictor: i,
                name: ds.names()[i].clone(),
                importance,
                spread,
                conditioning: conditioning[i].clone(),
                strata: groups[i].len(),
            }
        })
        .collect();
    Ok(CvimReport { entries, replicates: config.replicates, effective_replicates: effective })
}

fn mean_and_spread(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut sum = math::CompensatedSum::default();
    values.iter().for_each(|&v| sum.add(v));
    let mean = sum.value() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, math::sqrt(var))
}
