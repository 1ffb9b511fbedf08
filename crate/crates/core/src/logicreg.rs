//! Logic regression over ternary expression trees.
//!
//! A tree is an elementary polynomial: leaves hold predictor indices, knots
//! hold a sum or a product, and all arithmetic is mod 3. A forest of `s`
//! trees enters the linear score h(x) = b0 + sum_v b_v T_v(x), plus fixed
//! linear terms for external factors under Model 1. Coefficients minimize
//! the penalty-weighted logistic score L; forests are searched by simulated
//! annealing over the neighbor graph of the six tree moves.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan, Label, PredictorKind};
use crate::metrics::{self, CvError, Learner, Predictor};
use crate::rng::{self, derive_seed, Rng, STREAM_ANNEAL};
use crate::{linalg, math, par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Sum,
    Product,
}

impl Op {
    pub const BOTH: [Op; 2] = [Op::Sum, Op::Product];

    pub fn apply(self, a: u8, b: u8) -> u8 {
        match self {
            Op::Sum => (a + b) % 3,
            Op::Product => (a * b) % 3,
        }
    }

    pub fn flip(self) -> Op {
        match self {
            Op::Sum => Op::Product,
            Op::Product => Op::Sum,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Op::Sum => "+",
            Op::Product => "*",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExprTree {
    Leaf(usize),
    Knot(Op, Box<ExprTree>, Box<ExprTree>),
}

impl ExprTree {
    pub fn leaf(index: usize) -> ExprTree {
        ExprTree::Leaf(index)
    }

    pub fn knot(op: Op, left: ExprTree, right: ExprTree) -> ExprTree {
        ExprTree::Knot(op, Box::new(left), Box::new(right))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ExprTree::Leaf(_))
    }

    /// Number of leaves.
    pub fn complexity(&self) -> usize {
        match self {
            ExprTree::Leaf(_) => 1,
            ExprTree::Knot(_, l, r) => l.complexity() + r.complexity(),
        }
    }

    /// Distinct predictor indices, ascending.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = BTreeSet::new();
        self.visit_leaves(&mut |v| {
            out.insert(v);
        });
        out.into_iter().collect()
    }

    fn visit_leaves(&self, f: &mut impl FnMut(usize)) {
        match self {
            ExprTree::Leaf(v) => f(*v),
            ExprTree::Knot(_, l, r) => {
                l.visit_leaves(f);
                r.visit_leaves(f);
            }
        }
    }

    /// Evaluate bottom-up on a predictor row, mod 3.
    pub fn eval(&self, x: &[u8]) -> u8 {
        match self {
            ExprTree::Leaf(v) => x[*v],
            ExprTree::Knot(op, l, r) => op.apply(l.eval(x), r.eval(x)),
        }
    }

    /// Text form with the given predictor names, e.g. `(a * b) * (c + d)`.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.write_to(&mut out, &|v| names[v].clone(), true);
        out
    }

    fn write_to(&self, out: &mut String, name: &dyn Fn(usize) -> String, top: bool) {
        match self {
            ExprTree::Leaf(v) => out.push_str(&name(*v)),
            ExprTree::Knot(op, l, r) => {
                if !top {
                    out.push('(');
                }
                l.write_to(out, name, false);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                r.write_to(out, name, false);
                if !top {
                    out.push(')');
                }
            }
        }
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.write_to(&mut out, &|v| format!("x{}", v + 1), true);
        f.write_str(&out)
    }
}

/// Structural model restricting which predictors may appear in trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Any predictor anywhere.
    #[default]
    Unconstrained,
    /// Trees over genetic predictors; every external factor enters as its
    /// own fixed linear term.
    Model1,
    /// External leaves only as `genetic * external` branches.
    Model2,
    /// External factors only.
    Model3,
    /// Genetic predictors only.
    Model4,
}

/// The set of forests the search may visit.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    constraint: Constraint,
    s: usize,
    r_max: usize,
    pool: Vec<usize>,
    fixed: Vec<usize>,
    external: Vec<bool>,
}

pub const MAX_TREES: usize = 8;

impl SearchSpace {
    pub fn new(ds: &Dataset, s: usize, r_max: usize, constraint: Constraint) -> Result<SearchSpace> {
        Self::from_kinds(ds.kinds(), s, r_max, constraint, None)
    }

    /// `restrict` limits the search to a subset of predictor indices.
    pub fn from_kinds(
        kinds: &[PredictorKind],
        s: usize,
        r_max: usize,
        constraint: Constraint,
        restrict: Option<&[usize]>,
    ) -> Result<SearchSpace> {
        if s == 0 || s > MAX_TREES {
            return Err(Error::param(format!("tree count must be in 1..={MAX_TREES}, got {s}")));
        }
        if r_max == 0 {
            return Err(Error::param("r_max must be at least 1"));
        }
        let candidates: Vec<usize> = match restrict {
            Some(r) => {
                if let Some(&bad) = r.iter().find(|&&i| i >= kinds.len()) {
                    return Err(Error::param(format!("predictor index {bad} out of range")));
                }
                r.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
            }
            None => (0..kinds.len()).collect(),
        };
        let is_ext = |i: &usize| kinds[*i] == PredictorKind::External;
        let genetic: Vec<usize> = candidates.iter().copied().filter(|i| !is_ext(i)).collect();
        let external: Vec<usize> = candidates.iter().copied().filter(is_ext).collect();
        let (pool, fixed) = match constraint {
            Constraint::Unconstrained | Constraint::Model2 => (candidates.clone(), Vec::new()),
            Constraint::Model1 => (genetic, external),
            Constraint::Model3 => (external, Vec::new()),
            Constraint::Model4 => (genetic, Vec::new()),
        };
        let space = SearchSpace {
            constraint,
            s,
            r_max,
            pool,
            fixed,
            external: kinds.iter().map(|k| *k == PredictorKind::External).collect(),
        };
        if space.start_leaves().is_empty() {
            return Err(Error::param(format!("no predictor may form a tree under {constraint:?}")));
        }
        Ok(space)
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    /// Predictors that may appear in trees.
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    /// Predictors entering as fixed linear terms.
    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn allows(&self, tree: &ExprTree) -> bool {
        if tree.complexity() > self.r_max {
            return false;
        }
        let in_pool = tree.variables().iter().all(|v| self.pool.binary_search(v).is_ok());
        in_pool && (self.constraint != Constraint::Model2 || self.model2_ok(tree, true))
    }

    fn model2_ok(&self, tree: &ExprTree, root: bool) -> bool {
        match tree {
            ExprTree::Leaf(v) => !(root && self.external[*v]),
            ExprTree::Knot(op, l, r) => {
                let side_ok = |child: &ExprTree, sibling: &ExprTree| match child {
                    ExprTree::Leaf(v) if self.external[*v] => {
                        *op == Op::Product && matches!(sibling, ExprTree::Leaf(g) if !self.external[*g])
                    }
                    _ => true,
                };
                side_ok(l, r) && side_ok(r, l) && self.model2_ok(l, false) && self.model2_ok(r, false)
            }
        }
    }

    fn start_leaves(&self) -> Vec<usize> {
        self.pool.iter().copied().filter(|&v| self.allows(&ExprTree::Leaf(v))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    VariableChange,
    OperatorChange,
    DeleteLeaf,
    SplitLeaf,
    BranchPruning,
    BranchGrowing,
}

impl MoveKind {
    pub const ALL: [MoveKind; 6] = [
        MoveKind::VariableChange,
        MoveKind::OperatorChange,
        MoveKind::DeleteLeaf,
        MoveKind::SplitLeaf,
        MoveKind::BranchPruning,
        MoveKind::BranchGrowing,
    ];
}

// Every tree obtained by replacing exactly one subtree `b` of `t` with one
// of `f(b)`.
fn rewrite_each(t: &ExprTree, f: &dyn Fn(&ExprTree) -> Vec<ExprTree>) -> Vec<ExprTree> {
    let mut out = f(t);
    if let ExprTree::Knot(op, l, r) = t {
        for l2 in rewrite_each(l, f) {
            out.push(ExprTree::Knot(*op, Box::new(l2), r.clone()));
        }
        for r2 in rewrite_each(r, f) {
            out.push(ExprTree::Knot(*op, l.clone(), Box::new(r2)));
        }
    }
    out
}

/// All results of one move of the given kind, before constraint filtering.
///
/// Splitting keeps the original variable as the left leaf; growing puts the
/// new variable on the left and never pairs a leaf with its own variable, so
/// the two moves never coincide at the same leaf. Pruning applies only to
/// knots with at least one non-leaf child; a two-leaf branch shrinks by
/// deleting a leaf.
pub fn apply_moves(tree: &ExprTree, kind: MoveKind, pool: &[usize]) -> Vec<ExprTree> {
    use ExprTree::{Knot, Leaf};
    match kind {
        MoveKind::VariableChange => rewrite_each(tree, &|b| match b {
            Leaf(a) => pool.iter().filter(|&&v| v != *a).map(|&v| Leaf(v)).collect(),
            _ => Vec::new(),
        }),
        MoveKind::OperatorChange => rewrite_each(tree, &|b| match b {
            Knot(op, l, r) => vec![Knot(op.flip(), l.clone(), r.clone())],
            _ => Vec::new(),
        }),
        MoveKind::DeleteLeaf => rewrite_each(tree, &|b| match b {
            Knot(_, l, r) if l.is_leaf() && r.is_leaf() => vec![(**l).clone(), (**r).clone()],
            _ => Vec::new(),
        }),
        MoveKind::SplitLeaf => rewrite_each(tree, &|b| match b {
            Leaf(a) => pool
                .iter()
                .flat_map(|&v| Op::BOTH.map(|op| ExprTree::knot(op, Leaf(*a), Leaf(v))))
                .collect(),
            _ => Vec::new(),
        }),
        MoveKind::BranchPruning => rewrite_each(tree, &|b| match b {
            Knot(_, l, r) if !(l.is_leaf() && r.is_leaf()) => vec![(**l).clone(), (**r).clone()],
            _ => Vec::new(),
        }),
        MoveKind::BranchGrowing => rewrite_each(tree, &|b| {
            pool.iter()
                .filter(|&&v| *b != Leaf(v))
                .flat_map(|&v| Op::BOTH.map(|op| ExprTree::knot(op, Leaf(v), b.clone())))
                .collect()
        }),
    }
}

/// Legal neighbors of one tree, grouped by move kind.
///
/// A neighbor reachable by several moves is listed once, under the first
/// kind in [`MoveKind::ALL`] order, so the groups are disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    groups: [Vec<ExprTree>; 6],
}

impl Neighborhood {
    pub fn group(&self, kind: MoveKind) -> &[ExprTree] {
        &self.groups[kind as usize]
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_of(&self, tree: &ExprTree) -> Option<MoveKind> {
        MoveKind::ALL.into_iter().find(|&k| self.group(k).contains(tree))
    }

    pub fn iter(&self) -> impl Iterator<Item = (MoveKind, &ExprTree)> {
        MoveKind::ALL.into_iter().flat_map(move |k| self.group(k).iter().map(move |t| (k, t)))
    }
}

pub fn tree_neighbors(tree: &ExprTree, space: &SearchSpace) -> Neighborhood {
    let mut seen = BTreeSet::new();
    seen.insert(tree.clone());
    let groups = MoveKind::ALL.map(|kind| {
        apply_moves(tree, kind, &space.pool)
            .into_iter()
            .filter(|t| space.allows(t) && seen.insert(t.clone()))
            .collect()
    });
    Neighborhood { groups }
}

/// Which move turns `from` into `to`, if they are neighbors in `space`.
pub fn classify_move(from: &ExprTree, to: &ExprTree, space: &SearchSpace) -> Option<MoveKind> {
    tree_neighbors(from, space).kind_of(to)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<ExprTree>,
}

impl Forest {
    pub fn new(trees: Vec<ExprTree>) -> Forest {
        Forest { trees }
    }

    pub fn s(&self) -> usize {
        self.trees.len()
    }

    /// Largest tree complexity.
    pub fn complexity(&self) -> usize {
        self.trees.iter().map(ExprTree::complexity).max().unwrap_or(0)
    }

    pub fn satisfies(&self, space: &SearchSpace) -> bool {
        self.s() == space.s && self.trees.iter().all(|t| space.allows(t))
    }

    // Tree order does not change the fitted score.
    fn cache_key(&self) -> Vec<ExprTree> {
        let mut key = self.trees.clone();
        key.sort();
        key
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestMove {
    pub tree: usize,
    pub kind: MoveKind,
}

/// Draw a neighbor: a uniform tree among those with a legal move, a uniform
/// move kind among the legal kinds for that tree, then a uniform result of
/// that kind.
pub fn neighbors(forest: &Forest, space: &SearchSpace, rng: &mut Rng) -> Result<(Forest, ForestMove)> {
    let order = rng::permutation(forest.s(), rng);
    for t in order {
        let hood = tree_neighbors(&forest.trees[t], space);
        let kinds: Vec<MoveKind> = MoveKind::ALL.into_iter().filter(|&k| !hood.group(k).is_empty()).collect();
        if kinds.is_empty() {
            continue;
        }
        let kind = kinds[rng.random_range(0..kinds.len())];
        let group = hood.group(kind);
        let mut next = forest.clone();
        next.trees[t] = group[rng.random_range(0..group.len())].clone();
        return Ok((next, ForestMove { tree: t, kind }));
    }
    Err(Error::NoLegalMove)
}

/// A random legal forest: each tree starts as a random leaf and takes a
/// random walk of up to 2·r_max moves.
pub fn random_forest(space: &SearchSpace, rng: &mut Rng) -> Result<Forest> {
    let leaves = space.start_leaves();
    let mut trees = Vec::with_capacity(space.s);
    for _ in 0..space.s {
        let mut forest = Forest::new(vec![ExprTree::Leaf(leaves[rng.random_range(0..leaves.len())])]);
        let walk = rng.random_range(0..=2 * space.r_max);
        let single = SearchSpace { s: 1, ..space.clone() };
        for _ in 0..walk {
            forest = neighbors(&forest, &single, rng)?.0;
        }
        trees.extend(forest.trees);
    }
    Ok(Forest::new(trees))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Stop when the gradient norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest Euclidean length of one Newton step.
    pub step_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-8, max_iter: 200, step_cap: 10.0 }
    }
}

/// A forest with fitted coefficients.
///
/// `beta` is `[b0, b_1..b_s, then one per fixed term]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedForest {
    pub forest: Forest,
    pub fixed: Vec<usize>,
    pub beta: Vec<f64>,
    pub score: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Coefficients held at zero because their feature was constant on the
    /// training rows.
    pub degenerate: Vec<usize>,
    pub cv_error: Option<CvError>,
}

fn features_into(forest: &Forest, fixed: &[usize], x: &[u8], out: &mut Vec<f64>) {
    out.push(1.0);
    out.extend(forest.trees.iter().map(|t| t.eval(x) as f64));
    out.extend(fixed.iter().map(|&i| x[i] as f64));
}

impl FittedForest {
    /// The linear score h(x).
    pub fn score_at(&self, x: &[u8]) -> f64 {
        let mut f = Vec::with_capacity(self.beta.len());
        features_into(&self.forest, &self.fixed, x, &mut f);
        linalg::dot(&f, &self.beta)
    }

    /// `b0 + b1 * [T1] + ...` with predictor names.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = format!("{}", self.beta[0]);
        let terms = self
            .forest
            .trees
            .iter()
            .map(|t| format!("[{}]", t.render(names)))
            .chain(self.fixed.iter().map(|&i| names[i].clone()));
        for (b, term) in self.beta[1..].iter().zip(terms) {
            if *b < 0.0 {
                out.push_str(&format!(" - {} * {}", -b, term));
            } else {
                out.push_str(&format!(" + {} * {}", b, term));
            }
        }
        out
    }
}

/// Sign rule: +1 iff h(x) > 0.
pub fn lr_predict(fit: &FittedForest, x: &[u8]) -> Label {
    if fit.score_at(x) > 0.0 {
        Label::Case
    } else {
        Label::Control
    }
}

impl Predictor for FittedForest {
    fn predict(&self, x: &[u8]) -> Label {
        lr_predict(self, x)
    }

    fn describe(&self) -> String {
        let names: Vec<String> = (0..self.fixed.iter().copied().chain(self.forest.trees.iter().flat_map(|t| t.variables())).max().map_or(0, |m| m + 1))
            .map(|i| format!("x{}", i + 1))
            .collect();
        format!("{} (mod 3 arithmetic inside brackets)", self.render(&names))
    }
}

// Feature rows, labels and penalty-weighted row weights for one subsample.
struct Design {
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Design {
    fn new(forest: &Forest, fixed: &[usize], ds: &Dataset, rows: &[usize]) -> Result<Design> {
        let psi = [
            metrics::penalty(ds, rows, Label::Control)?,
            metrics::penalty(ds, rows, Label::Case)?,
        ];
        let m = rows.len() as f64;
        let p = 1 + forest.s() + fixed.len();
        let mut x = Vec::with_capacity(rows.len() * p);
        for &j in rows {
            features_into(forest, fixed, ds.row(j), &mut x);
        }
        let y = rows.iter().map(|&j| ds.label(j).sign()).collect();
        let w = rows.iter().map(|&j| psi[ds.label(j).index()] / m).collect();
        Ok(Design { p, x, y, w })
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.p..(j + 1) * self.p]
    }

    fn loss(&self, beta: &[f64]) -> f64 {
        let mut sum = math::CompensatedSum::default();
        for j in 0..self.y.len() {
            let t = -self.y[j] * linalg::dot(self.row(j), beta);
            sum.add(self.w[j] * math::softplus(t));
        }
        sum.value() / core::f64::consts::LN_2
    }

    fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        for j in 0..self.y.len() {
            let f = self.row(j);
            let t = -self.y[j] * linalg::dot(f, beta);
            let c = self.w[j] * math::sigmoid(t) / core::f64::consts::LN_2 * -self.y[j];
            for (gi, fi) in g.iter_mut().zip(f) {
                *gi += c * fi;
            }
        }
        g
    }

    // Gradient and Hessian restricted to the `active` coordinates.
    fn newton_terms(&self, beta: &[f64], active: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let a = active.len();
        let mut g = vec![0.0; a];
        let mut h = vec![0.0; a * a];
        for j in 0..self.y.len() {
            let f = self.row(j);
            let t = -self.y[j] * linalg::dot(f, beta);
            let s = math::sigmoid(t);
            let cg = self.w[j] * s / core::f64::consts::LN_2 * -self.y[j];
            let ch = self.w[j] * s * (1.0 - s) / core::f64::consts::LN_2;
            for (u, &iu) in active.iter().enumerate() {
                g[u] += cg * f[iu];
                for (v, &iv) in active.iter().enumerate().take(u + 1) {
                    h[u * a + v] += ch * f[iu] * f[iv];
                }
            }
        }
        for u in 0..a {
            for v in 0..u {
                h[v * a + u] = h[u * a + v];
            }
        }
        (g, h)
    }

    fn constant_column(&self, c: usize) -> bool {
        let first = self.x[c];
        (0..self.y.len()).all(|j| self.x[j * self.p + c] == first)
    }
}

fn check_beta(forest: &Forest, fixed: &[usize], beta: &[f64]) -> Result<()> {
    let p = 1 + forest.s() + fixed.len();
    if beta.len() != p {
        return Err(Error::param(format!("expected {p} coefficients, got {}", beta.len())));
    }
    Ok(())
}

/// Normalized smoothed score L = (1/#S) sum phi(-y h(x)) psi(y) with
/// phi(t) = log2(1 + e^t), on `rows`.
pub fn score_l(forest: &Forest, fixed: &[usize], beta: &[f64], ds: &Dataset, rows: &[usize]) -> Result<f64> {
    check_beta(forest, fixed, beta)?;
    Ok(Design::new(forest, fixed, ds, rows)?.loss(beta))
}

/// Gradient of [`score_l`] with respect to the coefficients.
pub fn score_gradient(forest: &Forest, fixed: &[usize], beta: &[f64], ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
    check_beta(forest, fixed, beta)?;
    Ok(Design::new(forest, fixed, ds, rows)?.gradient(beta))
}

/// Minimize L over the coefficients by safeguarded Newton: Cholesky steps
/// with a small ridge, capped in length, with backtracking.
pub fn fit_beta(forest: &Forest, fixed: &[usize], ds: &Dataset, rows: &[usize], options: FitOptions) -> Result<FittedForest> {
    let design = Design::new(forest, fixed, ds, rows)?;
    let p = design.p;
    if rows.len() < p {
        return Err(Error::param(format!("{p} coefficients need at least {p} training rows")));
    }
    let (active, degenerate): (Vec<usize>, Vec<usize>) = (0..p).partition(|&c| c == 0 || !design.constant_column(c));

    let mut beta = vec![0.0; p];
    let mut loss = design.loss(&beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        let (g, h) = design.newton_terms(&beta, &active);
        let gnorm = linalg::norm(&g);
        if !gnorm.is_finite() {
            return Err(Error::NonFinite("score gradient"));
        }
        if gnorm <= options.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut step = [1e-10, 1e-6, 1e-2]
            .iter()
            .find_map(|&ridge| linalg::solve_spd(&h, &neg_g, ridge))
            .unwrap_or_else(|| neg_g.clone());
        let mut slope = linalg::dot(&g, &step);
        if !(slope < 0.0) {
            step = neg_g;
            slope = -gnorm * gnorm;
        }
        let len = linalg::norm(&step);
        if len > options.step_cap {
            let k = options.step_cap / len;
            step.iter_mut().for_each(|v| *v *= k);
            slope *= k;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut candidate = beta.clone();
            for (u, &c) in active.iter().enumerate() {
                candidate[c] += t * step[u];
            }
            let l = design.loss(&candidate);
            if l.is_finite() && l <= loss + 1e-4 * t * slope {
                accepted = Some((candidate, l));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((b, l)) => {
                beta = b;
                loss = l;
            }
            None => break,
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("score"));
    }
    Ok(FittedForest {
        forest: forest.clone(),
        fixed: fixed.to_vec(),
        beta,
        score: loss,
        converged,
        iterations,
        degenerate,
        cv_error: None,
    })
}

/// Fits coefficients for a fixed forest.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestLearner {
    pub forest: Forest,
    pub fixed: Vec<usize>,
    pub options: FitOptions,
}

impl Learner for ForestLearner {
    type Model = FittedForest;

    fn fit(&self, ds: &Dataset, rows: &[usize], _seed: u64) -> Result<FittedForest> {
        fit_beta(&self.forest, &self.fixed, ds, rows, self.options)
    }
}

/// How the forest error inside the search is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Refit the coefficients on each training complement.
    #[default]
    PerFold,
    /// Approximation: fit once on all rows and score each fold with it.
    FullSample,
}

/// Cross-validated balanced error of a forest.
pub fn forest_cv_error(
    ds: &Dataset,
    plan: &FoldPlan,
    forest: &Forest,
    fixed: &[usize],
    options: FitOptions,
    objective: Objective,
) -> Result<CvError> {
    match objective {
        Objective::PerFold => metrics::cv_error_with(ds, plan, |_, training| fit_beta(forest, fixed, ds, training, options)),
        Objective::FullSample => {
            metrics::check_plan(ds, plan)?;
            let fit = fit_beta(forest, fixed, ds, &ds.all_rows(), options)?;
            let per_fold = (0..plan.k())
                .map(|k| metrics::class_miss_counts(&fit, ds, plan.fold(k)))
                .collect::<Result<Vec<_>>>()?;
            Ok(CvError::from_fold_counts(&per_fold))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// T_k = t0 * final_ratio^(k / (steps - 1)). Without `t0` the start is the
    /// spread of the error over random forests.
    Geometric { t0: Option<f64>, final_ratio: f64 },
    Constant { temperature: f64 },
    /// Zero temperature: accept only non-worsening moves.
    Descent,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Geometric { t0: None, final_ratio: 1e-3 }
    }
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        let positive = |t: f64| t > 0.0 && t.is_finite();
        match *self {
            Schedule::Geometric { t0, final_ratio } => {
                if t0.is_some_and(|t| !positive(t)) {
                    return Err(Error::param("starting temperature must be positive"));
                }
                if !(final_ratio > 0.0 && final_ratio <= 1.0) {
                    return Err(Error::param("final_ratio must be in (0, 1]"));
                }
            }
            Schedule::Constant { temperature } if !positive(temperature) => {
                return Err(Error::param("temperature must be positive"));
            }
            _ => {}
        }
        Ok(())
    }

    fn temperature(&self, t0: f64, step: usize, steps: usize) -> f64 {
        match *self {
            Schedule::Geometric { final_ratio, .. } => {
                if steps <= 1 {
                    t0
                } else {
                    t0 * libm::pow(final_ratio, step as f64 / (steps - 1) as f64)
                }
            }
            Schedule::Constant { temperature } => temperature,
            Schedule::Descent => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub s: usize,
    pub r_max: usize,
    pub constraint: Constraint,
    pub steps: usize,
    pub schedule: Schedule,
    pub objective: Objective,
    /// Independent chains; the best result wins.
    pub restarts: usize,
    pub fit: FitOptions,
    /// Random forests sampled to set the starting temperature.
    pub t0_samples: usize,
    /// Restrict trees to these predictor indices.
    pub predictors: Option<Vec<usize>>,
    /// Record every step of the winning chain.
    pub trace: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            s: 3,
            r_max: 8,
            constraint: Constraint::Unconstrained,
            steps: 5000,
            schedule: Schedule::default(),
            objective: Objective::PerFold,
            restarts: 1,
            fit: FitOptions::default(),
            t0_samples: 20,
            predictors: None,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub temperature: f64,
    pub tree: usize,
    pub kind: MoveKind,
    pub proposed: f64,
    pub accepted: bool,
    pub current: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    /// Best forest visited by any chain, refit on all rows. Its `cv_error`
    /// is the search objective at that forest.
    pub fit: FittedForest,
    pub constraint: Constraint,
    pub best_error: f64,
    /// Objective at the starting forest of the winning chain.
    pub initial_error: f64,
    /// Best error per restart.
    pub restart_errors: Vec<f64>,
    /// Starting temperature per restart.
    pub temperatures: Vec<f64>,
    /// Distinct forests scored, summed over restarts.
    pub evaluations: usize,
    pub trace: Vec<TraceStep>,
}

struct Chain {
    best: Forest,
    best_error: f64,
    initial_error: f64,
    t0: f64,
    evaluations: usize,
    trace: Vec<TraceStep>,
}

fn run_chain(ds: &Dataset, plan: &FoldPlan, space: &SearchSpace, config: &AnnealConfig, seed: u64) -> Result<Chain> {
    let mut rng = rng::rng_from_seed(seed);
    let mut cache: BTreeMap<Vec<ExprTree>, f64> = BTreeMap::new();
    let mut score = |forest: &Forest| -> Result<f64> {
        let key = forest.cache_key();
        if let Some(&e) = cache.get(&key) {
            return Ok(e);
        }
        let e = forest_cv_error(ds, plan, forest, space.fixed(), config.fit, config.objective)?.value;
        cache.insert(key, e);
        Ok(e)
    };

    let t0 = match config.schedule {
        Schedule::Geometric { t0: Some(t), .. } => t,
        Schedule::Geometric { t0: None, .. } => {
            let mut errors = Vec::with_capacity(config.t0_samples);
            for _ in 0..config.t0_samples {
                let f = random_forest(space, &mut rng)?;
                errors.push(score(&f)?);
            }
            let spread = spread(&errors);
            if spread > 0.0 && spread.is_finite() {
                spread
            } else {
                1e-3
            }
        }
        Schedule::Constant { temperature } => temperature,
        Schedule::Descent => 0.0,
    };

    let mut current = random_forest(space, &mut rng)?;
    let mut current_error = score(&current)?;
    let initial_error = current_error;
    let mut best = current.clone();
    let mut best_error = current_error;
    let mut trace = Vec::new();
    for step in 0..config.steps {
        let temperature = config.schedule.temperature(t0, step, config.steps);
        let (candidate, mv) = neighbors(&current, space, &mut rng)?;
        let proposed = score(&candidate)?;
        let delta = proposed - current_error;
        let accepted = delta <= 0.0 || (temperature > 0.0 && rng.random::<f64>() < math::exp(-delta / temperature));
        if accepted {
            current = candidate;
            current_error = proposed;
            if current_error < best_error {
                best = current.clone();
                best_error = current_error;
            }
        }
        if config.trace {
            trace.push(TraceStep {
                temperature,
                tree: mv.tree,
                kind: mv.kind,
                proposed,
                accepted,
                current: current_error,
                best: best_error,
            });
        }
    }
    Ok(Chain { best, best_error, initial_error, t0, evaluations: cache.len(), trace })
}

fn spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

/// Simulated annealing over forests, returning the best forest ever visited
/// (not the final state), refit on all rows.
pub fn anneal(ds: &Dataset, plan: &FoldPlan, config: &AnnealConfig, seed: u64) -> Result<AnnealOutcome> {
    config.schedule.validate()?;
    if config.restarts == 0 {
        return Err(Error::param("at least one restart required"));
    }
    let space = SearchSpace::from_kinds(ds.kinds(), config.s, config.r_max, config.constraint, config.predictors.as_deref())?;
    metrics::check_plan(ds, plan)?;

    let chains = par::try_map_indexed(config.restarts, |r| {
        run_chain(ds, plan, &space, config, derive_seed(seed, STREAM_ANNEAL, r as u64))
    })?;
    let winner = (0..chains.len())
        .min_by(|&a, &b| chains[a].best_error.total_cmp(&chains[b].best_error).then(a.cmp(&b)))
        .expect("at least one restart");

    let chain = &chains[winner];
    let cv = forest_cv_error(ds, plan, &chain.best, space.fixed(), config.fit, config.objective)?;
    let mut fit = fit_beta(&chain.best, space.fixed(), ds, &ds.all_rows(), config.fit)?;
    fit.cv_error = Some(cv);
    Ok(AnnealOutcome {
        fit,
        constraint: config.constraint,
        best_error: chain.best_error,
        initial_error: chain.initial_error,
        restart_errors: chains.iter().map(|c| c.best_error).collect(),
        temperatures: chains.iter().map(|c| c.t0).collect(),
        evaluations: chains.iter().map(|c| c.evaluations).sum(),
        trace: chains[winner].trace.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ExprTree::Leaf;

    fn k(op: Op, l: ExprTree, r: ExprTree) -> ExprTree {
        ExprTree::knot(op, l, r)
    }

    fn fig1() -> ExprTree {
        k(Op::Product, k(Op::Product, Leaf(0), Leaf(1)), k(Op::Sum, Leaf(2), Leaf(3)))
    }

    fn genetic_space(n: usize, s: usize, r_max: usize) -> SearchSpace {
        SearchSpace::from_kinds(&vec![PredictorKind::Genetic; n], s, r_max, Constraint::Unconstrained, None).unwrap()
    }

    #[test]
    fn evaluates_mod_3() {
        assert_eq!(fig1().eval(&[1, 2, 1, 1]), 1);
        assert_eq!(Leaf(2).eval(&[0, 1, 2]), 2);
        assert_eq!(Op::Sum.apply(2, 2), 1);
        assert_eq!(Op::Product.apply(2, 2), 1);
        assert_eq!(fig1().complexity(), 4);
        assert_eq!(fig1().to_string(), "(x1 * x2) * (x3 + x4)");
    }

    #[test]
    fn single_leaf_moves() {
        let space = genetic_space(4, 1, 4);
        let hood = tree_neighbors(&Leaf(2), &space);
        assert!(hood.group(MoveKind::DeleteLeaf).is_empty());
        assert!(hood.group(MoveKind::BranchPruning).is_empty());
        assert!(hood.group(MoveKind::OperatorChange).is_empty());
        assert_eq!(hood.group(MoveKind::VariableChange).len(), 3);
        for t in hood.group(MoveKind::SplitLeaf) {
            match t {
                ExprTree::Knot(_, l, _) => assert_eq!(**l, Leaf(2)),
                _ => panic!("split must give a branch"),
            }
        }
        assert_eq!(hood.group(MoveKind::SplitLeaf).len(), 8);
        assert_eq!(hood.group(MoveKind::BranchGrowing).len(), 6);
    }

    #[test]
    fn complexity_cap_limits_growth() {
        let space = genetic_space(4, 1, 4);
        let hood = tree_neighbors(&fig1(), &space);
        assert!(hood.group(MoveKind::SplitLeaf).is_empty());
        assert!(hood.group(MoveKind::BranchGrowing).is_empty());
        assert_eq!(hood.group(MoveKind::OperatorChange).len(), 3);
        assert_eq!(hood.group(MoveKind::DeleteLeaf).len(), 4);
        assert_eq!(hood.group(MoveKind::BranchPruning).len(), 2);
    }

    #[test]
    fn model_constraints() {
        use PredictorKind::{External, Genetic};
        let kinds = [Genetic, Genetic, External];
        let m1 = SearchSpace::from_kinds(&kinds, 2, 3, Constraint::Model1, None).unwrap();
        assert_eq!(m1.pool(), &[0, 1]);
        assert_eq!(m1.fixed(), &[2]);
        assert!(!m1.allows(&k(Op::Sum, Leaf(0), Leaf(2))));

        let m2 = SearchSpace::from_kinds(&kinds, 2, 3, Constraint::Model2, None).unwrap();
        assert!(m2.allows(&k(Op::Product, Leaf(0), Leaf(2))));
        assert!(m2.allows(&k(Op::Sum, Leaf(1), k(Op::Product, Leaf(2), Leaf(0)))));
        assert!(!m2.allows(&k(Op::Sum, Leaf(0), Leaf(2))));
        assert!(!m2.allows(&k(Op::Product, Leaf(2), Leaf(2))));
        assert!(!m2.allows(&k(Op::Product, k(Op::Sum, Leaf(0), Leaf(1)), Leaf(2))));
        assert!(!m2.allows(&Leaf(2)));

        let m3 = SearchSpace::from_kinds(&kinds, 1, 3, Constraint::Model3, None).unwrap();
        assert_eq!(m3.pool(), &[2]);
        let m4 = SearchSpace::from_kinds(&kinds, 1, 3, Constraint::Model4, None).unwrap();
        assert_eq!(m4.pool(), &[0, 1]);
        assert!(SearchSpace::from_kinds(&[Genetic], 1, 3, Constraint::Model3, None).is_err());
        assert!(SearchSpace::from_kinds(&[External], 1, 3, Constraint::Model2, None).is_err());
    }

    fn toy() -> Dataset {
        let rows = vec![vec![0, 1], vec![1, 0], vec![2, 2], vec![1, 1]];
        Dataset::from_rows(&rows, &[-1, 1, 1, -1]).unwrap()
    }

    #[test]
    fn score_at_zero_is_weighted_mean_of_one() {
        let ds = toy();
        let f = Forest::new(vec![Leaf(0)]);
        let l = score_l(&f, &[], &[0.0, 0.0], &ds, &ds.all_rows()).unwrap();
        // psi = 1/2 for both classes, phi(0) = 1
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn score_by_hand() {
        let ds = toy();
        let f = Forest::new(vec![Leaf(0)]);
        let beta = [-0.5, 0.75];
        let l = score_l(&f, &[], &beta, &ds, &ds.all_rows()).unwrap();
        let phi = |t: f64| (1.0 + t.exp()).log2();
        let h = |x: f64| -0.5 + 0.75 * x;
        let expected = 0.25 * 0.5 * (phi(h(0.0)) + phi(-h(1.0)) + phi(-h(2.0)) + phi(h(1.0)));
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn fit_reduces_score_and_flags_constant_trees() {
        let ds = toy();
        let f = Forest::new(vec![Leaf(0), k(Op::Product, Leaf(0), Leaf(1))]);
        // x1 * x2 mod 3 is 0,0,1,1 on the rows: not constant
        let fit = fit_beta(&f, &[], &ds, &ds.all_rows(), FitOptions::default()).unwrap();
        assert!(fit.score <= 0.5);
        let single = fit_beta(&f, &[], &ds, &[1, 2], FitOptions::default());
        assert!(matches!(single, Err(Error::SingleClass { .. })));
        let ds2 = Dataset::from_rows(&[vec![1, 0], vec![2, 0], vec![1, 1], vec![2, 1]], &[1, -1, -1, 1]).unwrap();
        let flat = Forest::new(vec![Leaf(0), Leaf(1), k(Op::Product, Leaf(0), Leaf(0))]);
        // x1^2 mod 3 is 1 for x1 in {1, 2}: constant
        let fit = fit_beta(&flat, &[], &ds2, &ds2.all_rows(), FitOptions::default()).unwrap();
        assert_eq!(fit.degenerate, vec![3]);
        assert_eq!(fit.beta[3], 0.0);
    }

    #[test]
    fn separable_fit_predicts_correctly() {
        let rows: Vec<Vec<u8>> = (0..20).map(|j| vec![(j % 2 * 2) as u8]).collect();
        let y: Vec<i8> = (0..20).map(|j| if j % 2 == 1 { 1 } else { -1 }).collect();
        let ds = Dataset::from_rows(&rows, &y).unwrap();
        let fit = fit_beta(&Forest::new(vec![Leaf(0)]), &[], &ds, &ds.all_rows(), FitOptions::default()).unwrap();
        assert!(fit.beta[1] > 5.0);
        assert_eq!(metrics::balanced_error(&fit, &ds, &ds.all_rows()).unwrap(), 0.0);
    }

    #[test]
    fn predict_tie_is_control() {
        let fit = FittedForest {
            forest: Forest::new(vec![Leaf(0)]),
            fixed: vec![],
            beta: vec![0.0, 0.0],
            score: 0.0,
            converged: true,
            iterations: 0,
            degenerate: vec![],
            cv_error: None,
        };
        assert_eq!(lr_predict(&fit, &[2]), Label::Control);
        let up = FittedForest { beta: vec![5.0, 0.0], ..fit };
        assert_eq!(lr_predict(&up, &[0]), Label::Case);
        assert_eq!(up.describe(), "5 + 0 * [x1] (mod 3 arithmetic inside brackets)");
    }

    #[test]
    fn schedules_validate() {
        assert!(Schedule::Constant { temperature: 0.0 }.validate().is_err());
        assert!(Schedule::Geometric { t0: Some(-1.0), final_ratio: 0.1 }.validate().is_err());
        assert!(Schedule::Geometric { t0: None, final_ratio: 0.0 }.validate().is_err());
        assert!(Schedule::Descent.validate().is_ok());
        let g = Schedule::Geometric { t0: Some(1.0), final_ratio: 1e-3 };
        assert_eq!(g.temperature(1.0, 0, 11), 1.0);
        assert!((g.temperature(1.0, 10, 11) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn descent_never_worsens() {
        let rows: Vec<Vec<u8>> = (0..60).map(|j| vec![(j % 3) as u8, (j / 3 % 3) as u8, (j * 7 % 3) as u8]).collect();
        let y: Vec<i8> = rows.iter().map(|r| if (r[0] + r[1]) % 3 == 0 { 1 } else { -1 }).collect();
        let ds = Dataset::from_rows(&rows, &y).unwrap();
        let plan = FoldPlan::contiguous(60, 3).unwrap();
        let config = AnnealConfig {
            s: 1,
            r_max: 2,
            steps: 100,
            schedule: Schedule::Descent,
            trace: true,
            ..AnnealConfig::default()
        };
        let out = anneal(&ds, &plan, &config, 5).unwrap();
        assert!(out.best_error <= out.initial_error);
        assert!(out.trace.windows(2).all(|w| w[1].current <= w[0].current));
        assert_eq!(out.best_error, 0.0);
        assert_eq!(out.fit.cv_error.as_ref().unwrap().value, 0.0);
    }
}
