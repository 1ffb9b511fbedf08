//! Classification trees grown by greedy empirical-Gini splitting.
//!
//! Internal nodes test `x_i <= t` with `t` in {0, 1}; rows passing the test
//! go to the low child. A split is made only if the summed Gini of the two
//! children is strictly below the Gini of the parent.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Add;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::metrics::{Learner, Predictor};
use crate::{rng, Error, Result};

/// A test `x[column] <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    pub threshold: u8,
}

impl Split {
    pub fn low(&self, x: &[u8]) -> bool {
        x[self.column] <= self.threshold
    }
}

/// Set of predictor rows reaching a node: allowed values per predictor as
/// a bit mask over {0, 1, 2}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    allowed: Vec<u8>,
}

impl Region {
    pub fn full(n_predictors: usize) -> Region {
        Region { allowed: vec![0b111; n_predictors] }
    }

    pub fn contains(&self, x: &[u8]) -> bool {
        self.allowed.iter().zip(x).all(|(mask, &v)| mask & (1 << v) != 0)
    }

    pub fn allowed(&self, column: usize) -> impl Iterator<Item = u8> + '_ {
        (0..3u8).filter(move |v| self.allowed[column] & (1 << v) != 0)
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.contains(&0)
    }

    fn restrict(&self, split: Split, low: bool) -> Region {
        let mut out = self.clone();
        let side: u8 = if low { (1 << (split.threshold + 1)) - 1 } else { 0b111 & !((1 << (split.threshold + 1)) - 1) };
        out.allowed[split.column] &= side;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split { split: Split, low: usize, high: usize },
    Leaf { label: Label, region: Region, size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTree {
    n_predictors: usize,
    /// Root at index 0.
    nodes: Vec<Node>,
}

impl ClassTree {
    pub fn leaf(n_predictors: usize, label: Label) -> ClassTree {
        ClassTree {
            n_predictors,
            nodes: vec![Node::Leaf { label, region: Region::full(n_predictors), size: 0 }],
        }
    }

    /// Join two subtrees under a split node.
    pub fn join(split: Split, low: ClassTree, high: ClassTree) -> Result<ClassTree> {
        let n = low.n_predictors;
        if high.n_predictors != n || split.column >= n || split.threshold > 1 {
            return Err(Error::param("invalid split or mismatched subtrees"));
        }
        let mut nodes = vec![Node::Split { split, low: 1, high: 1 + low.nodes.len() }];
        let shift = |tree: ClassTree, by: usize, region: Region| {
            tree.nodes.into_iter().map(move |node| match node {
                Node::Split { split, low, high } => Node::Split { split, low: low + by, high: high + by },
                Node::Leaf { label, region: r, size } => {
                    let merged = Region { allowed: r.allowed.iter().zip(&region.allowed).map(|(a, b)| a & b).collect() };
                    Node::Leaf { label, region: merged, size }
                }
            })
        };
        let full = Region::full(n);
        let low_len = low.nodes.len();
        nodes.extend(shift(low, 1, full.restrict(split, true)));
        nodes.extend(shift(high, 1 + low_len, full.restrict(split, false)));
        Ok(ClassTree { n_predictors: n, nodes })
    }

    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Node index of the leaf reached by `x`.
    pub fn leaf_of(&self, x: &[u8]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { split, low, high } => at = if split.low(x) { *low } else { *high },
                Node::Leaf { .. } => return at,
            }
        }
    }

    /// Node indices of all leaves, ascending.
    pub fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i], Node::Leaf { .. })).collect()
    }

    pub fn leaf_label(&self, node: usize) -> Label {
        match &self.nodes[node] {
            Node::Leaf { label, .. } => *label,
            Node::Split { .. } => panic!("node {node} is not a leaf"),
        }
    }

    /// `(region, label)` per leaf, in node order.
    pub fn regions(&self) -> Vec<(&Region, Label)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { label, region, .. } => Some((region, *label)),
                Node::Split { .. } => None,
            })
            .collect()
    }

    pub fn splits(&self) -> impl Iterator<Item = Split> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { split, .. } => Some(*split),
            Node::Leaf { .. } => None,
        })
    }

    /// Indented text form with predictor names.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.render_node(0, 0, names, &mut out);
        out
    }

    fn render_node(&self, at: usize, depth: usize, names: &[String], out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        match &self.nodes[at] {
            Node::Split { split, low, high } => {
                out.push_str(&format!("{} <= {}\n", names[split.column], split.threshold));
                self.render_node(*low, depth + 1, names, out);
                self.render_node(*high, depth + 1, names, out);
            }
            Node::Leaf { label, size, .. } => {
                out.push_str(&format!("{:+} (n={size})\n", label.as_i8()));
            }
        }
    }
}

pub fn tree_predict(tree: &ClassTree, x: &[u8]) -> Label {
    tree.leaf_label(tree.leaf_of(x))
}

impl Predictor for ClassTree {
    fn predict(&self, x: &[u8]) -> Label {
        tree_predict(self, x)
    }

    fn describe(&self) -> String {
        let names: Vec<String> = (0..self.n_predictors).map(|i| format!("x{}", i + 1)).collect();
        self.render(&names)
    }
}

impl fmt::Display for ClassTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Nonnegative rational for exact Gini comparisons on unweighted counts.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    fn new(num: u128, den: u128) -> Ratio {
        let g = gcd(num, den);
        Ratio { num: num / g, den: den / g }
    }

    fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl Add for Ratio {
    type Output = Ratio;
    fn add(self, other: Ratio) -> Ratio {
        let g = gcd(self.den, other.den);
        let (a, b) = (self.den / g, other.den / g);
        match (self.num.checked_mul(b), other.num.checked_mul(a), self.den.checked_mul(b)) {
            (Some(x), Some(y), Some(d)) => Ratio::new(x + y, d),
            // Out of range: fall back to a float approximation.
            _ => {
                let v = self.as_f64() + other.as_f64();
                Ratio::new((v * (1u128 << 60) as f64) as u128, 1u128 << 60)
            }
        }
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Ratio) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Ratio) -> Option<Ordering> {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => Some(a.cmp(&b)),
            _ => self.as_f64().partial_cmp(&other.as_f64()),
        }
    }
}

// Row weights: exact counts for ordinary trees, reals for boosting stages.
trait Weight: Copy + Default + Add<Output = Self> + PartialOrd + Send + Sync {
    type Score: Copy + PartialOrd + Add<Output = Self::Score>;
    fn gini(cases: Self, total: Self) -> Self::Score;
    /// total * gini(cases, total)
    fn mass_gini(cases: Self, total: Self) -> Self::Score;
    fn as_f64(self) -> f64;
}

impl Weight for u64 {
    type Score = Ratio;
    fn gini(cases: u64, total: u64) -> Ratio {
        if total == 0 {
            return Ratio::new(0, 1);
        }
        let (a, n) = (cases as u128, total as u128);
        Ratio::new(2 * a * (n - a), n * n)
    }
    fn mass_gini(cases: u64, total: u64) -> Ratio {
        if total == 0 {
            return Ratio::new(0, 1);
        }
        let (a, n) = (cases as u128, total as u128);
        Ratio::new(2 * a * (n - a), n)
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Weight for f64 {
    type Score = f64;
    fn gini(cases: f64, total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        let p = cases / total;
        2.0 * p * (1.0 - p)
    }
    fn mass_gini(cases: f64, total: f64) -> f64 {
        total * Self::gini(cases, total)
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Empirical Gini index 2p(1-p) of the case fraction among `rows` that
/// satisfy `member`; 0 when none do.
pub fn gini<C: Fn(&[u8]) -> bool>(ds: &Dataset, rows: &[usize], member: C) -> f64 {
    let (mut cases, mut total) = (0u64, 0u64);
    for &j in rows {
        if member(ds.row(j)) {
            total += 1;
            cases += (ds.label(j) == Label::Case) as u64;
        }
    }
    <u64 as Weight>::gini(cases, total).as_f64()
}

// Rows of one node as parallel arrays.
struct Items<'a, W> {
    ds: &'a Dataset,
    criterion: SplitCriterion,
    rows: Vec<usize>,
    labels: Vec<Label>,
    weights: Vec<W>,
}

impl<W: Weight> Items<'_, W> {
    fn tally(&self, idx: &[usize]) -> (W, W) {
        let (mut cases, mut total) = (W::default(), W::default());
        for &k in idx {
            total = total + self.weights[k];
            if self.labels[k] == Label::Case {
                cases = cases + self.weights[k];
            }
        }
        (cases, total)
    }

    fn impurity(&self, cases: W, total: W) -> W::Score {
        match self.criterion {
            SplitCriterion::Weighted => W::mass_gini(cases, total),
            SplitCriterion::Unweighted => W::gini(cases, total),
        }
    }

    // Minimizer of the summed child impurity over candidate columns and t in
    // {0, 1}, kept only if strictly below the parent's impurity with both
    // children of at least `min_node` rows.
    fn best_split(&self, idx: &[usize], columns: &[usize], min_node: usize) -> Option<Split> {
        let (cases, total) = self.tally(idx);
        let parent = self.impurity(cases, total);
        let mut best: Option<(W::Score, Split)> = None;
        for &column in columns {
            // [value][control, case] weights and row counts per value
            let mut w = [[W::default(); 2]; 3];
            let mut count = [0usize; 3];
            for &k in idx {
                let v = self.ds.value(self.rows[k], column) as usize;
                let c = self.labels[k].index();
                w[v][c] = w[v][c] + self.weights[k];
                count[v] += 1;
            }
            for threshold in 0..2u8 {
                let t = threshold as usize;
                let low_n: usize = count[..=t].iter().sum();
                let high_n = idx.len() - low_n;
                if low_n < min_node || high_n < min_node {
                    continue;
                }
                let sum_side = |range: core::ops::Range<usize>| {
                    let mut ctrl = W::default();
                    let mut case = W::default();
                    for v in range {
                        ctrl = ctrl + w[v][0];
                        case = case + w[v][1];
                    }
                    self.impurity(case, ctrl + case)
                };
                let score = sum_side(0..t + 1) + sum_side(t + 1..3);
                if best.as_ref().is_none_or(|(b, _)| score < *b) {
                    best = Some((score, Split { column, threshold }));
                }
            }
        }
        best.filter(|(score, _)| *score < parent).map(|(_, s)| s)
    }

    fn leaf_label(&self, idx: &[usize]) -> Label {
        let (mut cases, mut controls) = (W::default(), W::default());
        for &k in idx {
            match self.labels[k] {
                Label::Case => cases = cases + self.weights[k],
                Label::Control => controls = controls + self.weights[k],
            }
        }
        if cases > controls {
            Label::Case
        } else {
            Label::Control
        }
    }

    fn priority(&self, idx: &[usize]) -> f64 {
        let (cases, total) = self.tally(idx);
        let total = total.as_f64();
        if total <= 0.0 {
            return 0.0;
        }
        let p = cases.as_f64() / total;
        total * 2.0 * p * (1.0 - p)
    }
}

/// How two children are scored against their parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    /// Child Gini indices weighted by child size: n+ G(A+) + n- G(A-)
    /// against n G(A).
    #[default]
    Weighted,
    /// Plain sum G(A+) + G(A-) against G(A). Rarely splits: the sum exceeds
    /// the parent unless one child is close to pure.
    Unweighted,
}

/// Best split of `rows` over all predictors, as used by [`grow_tree`].
pub fn best_split(ds: &Dataset, rows: &[usize], criterion: SplitCriterion, min_node: usize) -> Option<Split> {
    let items = Items::<u64> {
        ds,
        criterion,
        rows: rows.to_vec(),
        labels: rows.iter().map(|&j| ds.label(j)).collect(),
        weights: vec![1; rows.len()],
    };
    let idx: Vec<usize> = (0..rows.len()).collect();
    let columns: Vec<usize> = (0..ds.n_predictors()).collect();
    items.best_split(&idx, &columns, min_node.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartConfig {
    /// Largest number of leaves.
    pub d_max: usize,
    /// Smallest child size a split may create.
    pub min_node: usize,
    /// Draw this many candidate predictors per split. Off by default.
    pub mtry: Option<usize>,
    pub criterion: SplitCriterion,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig { d_max: 16, min_node: 5, mtry: None, criterion: SplitCriterion::Weighted }
    }
}

impl CartConfig {
    pub fn validate(&self, n_predictors: usize) -> Result<()> {
        if self.d_max == 0 {
            return Err(Error::param("d_max must be at least 1"));
        }
        if self.min_node == 0 {
            return Err(Error::param("min_node must be at least 1"));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > n_predictors {
                return Err(Error::param(format!("mtry must be in 1..={n_predictors}")));
            }
        }
        Ok(())
    }
}

struct Open {
    node: usize,
    idx: Vec<usize>,
    split: Option<Split>,
    priority: f64,
}

fn grow<W: Weight>(items: &Items<'_, W>, config: &CartConfig, seed: u64) -> Result<ClassTree> {
    let n = items.ds.n_predictors();
    config.validate(n)?;
    if items.rows.is_empty() {
        return Err(Error::param("cannot grow a tree on zero rows"));
    }
    let mut rng = rng::rng_from_seed(seed);
    let candidates = |rng: &mut rng::Rng| -> Vec<usize> {
        match config.mtry {
            Some(m) if m < n => {
                let mut c = rand::seq::index::sample(rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        }
    };
    let open_node = |node: usize, idx: Vec<usize>, rng: &mut rng::Rng| -> Open {
        let split = if config.d_max > 1 { items.best_split(&idx, &candidates(rng), config.min_node) } else { None };
        let priority = items.priority(&idx);
        Open { node, idx, split, priority }
    };

    let all: Vec<usize> = (0..items.rows.len()).collect();
    let mut nodes = vec![Node::Leaf { label: items.leaf_label(&all), region: Region::full(n), size: all.len() }];
    let mut open = vec![open_node(0, all, &mut rng)];
    let mut leaves = 1;
    while leaves < config.d_max {
        let mut pick: Option<usize> = None;
        for (k, o) in open.iter().enumerate() {
            if o.split.is_some() && pick.is_none_or(|p| o.priority > open[p].priority) {
                pick = Some(k);
            }
        }
        let Some(k) = pick else { break };
        let parent = open.remove(k);
        let split = parent.split.expect("picked leaves have a split");
        let region = match &nodes[parent.node] {
            Node::Leaf { region, .. } => region.clone(),
            Node::Split { .. } => unreachable!(),
        };
        let (low_idx, high_idx): (Vec<usize>, Vec<usize>) =
            parent.idx.iter().partition(|&&i| split.low(items.ds.row(items.rows[i])));
        let low = nodes.len();
        let high = low + 1;
        for (side_idx, is_low) in [(&low_idx, true), (&high_idx, false)] {
            nodes.push(Node::Leaf {
                label: items.leaf_label(side_idx),
                region: region.restrict(split, is_low),
                size: side_idx.len(),
            });
        }
        nodes[parent.node] = Node::Split { split, low, high };
        leaves += 1;
        // children are opened in order so the random stream is reproducible
        open.push(open_node(low, low_idx, &mut rng));
        open.push(open_node(high, high_idx, &mut rng));
    }
    Ok(ClassTree { n_predictors: n, nodes })
}

/// Grow a tree on `rows` (repeats allowed). Deterministic unless
/// `config.mtry` is set, in which case `seed` drives the predictor draws.
pub fn grow_tree(ds: &Dataset, rows: &[usize], config: &CartConfig, seed: u64) -> Result<ClassTree> {
    let items = Items::<u64> {
        ds,
        criterion: config.criterion,
        rows: rows.to_vec(),
        labels: rows.iter().map(|&j| ds.label(j)).collect(),
        weights: vec![1; rows.len()],
    };
    grow(&items, config, seed)
}

/// Grow a tree on `rows` with per-row targets and nonnegative weights.
/// Gini values and leaf labels use weighted class totals; `min_node` still
/// counts rows.
pub fn grow_weighted(
    ds: &Dataset,
    rows: &[usize],
    targets: &[Label],
    weights: &[f64],
    config: &CartConfig,
    seed: u64,
) -> Result<ClassTree> {
    if targets.len() != rows.len() || weights.len() != rows.len() {
        return Err(Error::param("targets and weights must align with rows"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::NonFinite("row weights"));
    }
    let items = Items::<f64> { ds, criterion: config.criterion, rows: rows.to_vec(), labels: targets.to_vec(), weights: weights.to_vec() };
    grow(&items, config, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CartLearner {
    pub config: CartConfig,
}

impl Learner for CartLearner {
    type Model = ClassTree;

    fn fit(&self, ds: &Dataset, rows: &[usize], seed: u64) -> Result<ClassTree> {
        grow_tree(ds, rows, &self.config, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[&[u8]], y: &[i8]) -> Dataset {
        Dataset::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), y).unwrap()
    }

    #[test]
    fn gini_values() {
        let d = ds(&[&[0], &[0], &[1], &[1]], &[1, -1, 1, 1]);
        let rows = d.all_rows();
        assert_eq!(gini(&d, &rows, |x| x[0] == 0), 0.5);
        assert_eq!(gini(&d, &rows, |x| x[0] == 1), 0.0);
        assert_eq!(gini(&d, &rows, |_| true), 0.375);
        assert_eq!(gini(&d, &rows, |x| x[0] == 2), 0.0);
    }

    #[test]
    fn separating_split_found() {
        let d = ds(&[&[1, 0], &[2, 0], &[0, 1], &[2, 1], &[0, 2], &[1, 2]], &[-1, 1, -1, 1, -1, -1]);
        // column 1 carries little signal; column 0 <= 1 separates fully
        for criterion in [SplitCriterion::Weighted, SplitCriterion::Unweighted] {
            assert_eq!(best_split(&d, &d.all_rows(), criterion, 1), Some(Split { column: 0, threshold: 1 }));
        }
        let pure = ds(&[&[0], &[1], &[2]], &[1, 1, 1]);
        assert_eq!(best_split(&pure, &pure.all_rows(), SplitCriterion::Weighted, 1), None);
    }

    #[test]
    fn single_leaf_is_majority() {
        let d = ds(&[&[0], &[1], &[2], &[2]], &[1, 1, -1, -1]);
        let config = CartConfig { d_max: 1, ..CartConfig::default() };
        let t = grow_tree(&d, &d.all_rows(), &config, 0).unwrap();
        assert_eq!(t.n_leaves(), 1);
        // 2 cases vs 2 controls is a tie
        assert_eq!(tree_predict(&t, &[0]), Label::Control);
    }

    #[test]
    fn two_level_interaction() {
        // case iff x1 = 2 and x2 = 2
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..3 {
            for a in 0..3u8 {
                for b in 0..3u8 {
                    rows.push(vec![a, b]);
                    y.push(if a == 2 && b == 2 { 1 } else { -1 });
                }
            }
        }
        let d = Dataset::from_rows(&rows, &y).unwrap();
        let config = CartConfig { d_max: 4, min_node: 1, ..CartConfig::default() };
        let t = grow_tree(&d, &d.all_rows(), &config, 0).unwrap();
        for j in 0..d.n_rows() {
            assert_eq!(tree_predict(&t, d.row(j)), d.label(j));
        }
        // the plain sum never splits here: one child is purer, the other
        // is more mixed than the parent
        let plain = CartConfig { criterion: SplitCriterion::Unweighted, ..config };
        assert_eq!(grow_tree(&d, &d.all_rows(), &plain, 0).unwrap().n_leaves(), 1);
    }

    // ((x1 = 2) and (x3 = 2)) or (x4 > 0)
    fn figure_tree() -> ClassTree {
        let leaf = |l| ClassTree::leaf(4, l);
        let x3 = ClassTree::join(Split { column: 2, threshold: 1 }, leaf(Label::Control), leaf(Label::Case)).unwrap();
        let x1 = ClassTree::join(Split { column: 0, threshold: 1 }, leaf(Label::Control), x3).unwrap();
        ClassTree::join(Split { column: 3, threshold: 0 }, x1, leaf(Label::Case)).unwrap()
    }

    #[test]
    fn routes_like_the_figure() {
        let t = figure_tree();
        assert_eq!(tree_predict(&t, &[2, 0, 2, 0]), Label::Case);
        assert_eq!(tree_predict(&t, &[1, 2, 2, 0]), Label::Control);
        assert_eq!(tree_predict(&t, &[0, 0, 0, 1]), Label::Case);
        assert_eq!(t.n_leaves(), 4);
        let single = ClassTree::leaf(2, Label::Case);
        assert_eq!(tree_predict(&single, &[0, 2]), Label::Case);
    }

    #[test]
    fn regions_partition_the_cube() {
        let t = figure_tree();
        let regions = t.regions();
        for code in 0..81u32 {
            let x: Vec<u8> = (0..4).map(|i| (code / 3u32.pow(i) % 3) as u8).collect();
            let hits: Vec<_> = regions.iter().filter(|(r, _)| r.contains(&x)).collect();
            assert_eq!(hits.len(), 1);
            assert_eq!(hits[0].1, tree_predict(&t, &x));
        }
    }

    #[test]
    fn render_is_indented() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| String::from(*s)).collect();
        let text = figure_tree().render(&names);
        assert!(text.starts_with("d <= 0\n  a <= 1\n    -1"));
    }

    #[test]
    fn ratio_order_is_exact() {
        let third = Ratio::new(1, 3);
        assert!(third + third + third == Ratio::new(1, 1));
        assert!(Ratio::new(1, 3) < Ratio::new(334, 1000));
    }
}
