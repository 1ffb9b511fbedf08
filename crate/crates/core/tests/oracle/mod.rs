//! Brute-force reference implementations used by the integration tests.
//!
//! Everything here is written from the definitions, independently of the
//! library code paths, and computes in exact integer arithmetic where the
//! library promises exact results.

#![allow(dead_code)]

use std::cmp::Ordering;

use genorisk_core::cart::{SplitCriterion, Split};
use genorisk_core::dataset::{Dataset, Label};
use genorisk_core::logicreg::{ExprTree, MoveKind, Op};

/// Exact fraction with positive denominator.
#[derive(Debug, Clone, Copy)]
pub struct Frac {
    pub num: i128,
    pub den: i128,
}

impl Frac {
    pub fn new(num: i128, den: i128) -> Frac {
        assert!(den != 0);
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        let g = gcd(num.abs(), den);
        Frac { num: num / g, den: den / g }
    }

    pub fn zero() -> Frac {
        Frac { num: 0, den: 1 }
    }

    pub fn add(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    pub fn mul(self, o: Frac) -> Frac {
        Frac::new(self.num * o.num, self.den * o.den)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 { a.max(1) } else { gcd(b, a % b) }
}

impl PartialEq for Frac {
    fn eq(&self, o: &Frac) -> bool {
        self.num * o.den == o.num * self.den
    }
}

impl Eq for Frac {}

impl PartialOrd for Frac {
    fn partial_cmp(&self, o: &Frac) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Frac {
    fn cmp(&self, o: &Frac) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

/// Contiguous folds: row j goes to fold min(j / [N/K], K - 1).
pub fn folds(n: usize, k: usize) -> Vec<Vec<usize>> {
    let block = n / k;
    let mut out = vec![Vec::new(); k];
    for j in 0..n {
        out[(j / block).min(k - 1)].push(j);
    }
    out
}

fn is_case(ds: &Dataset, j: usize) -> bool {
    ds.label(j) == Label::Case
}

/// Cell index with the first factor most significant.
pub fn cell_of(x: &[u8], combo: &[usize]) -> usize {
    let mut c = 0;
    for &i in combo {
        c = 3 * c + x[i] as usize;
    }
    c
}

/// Classic MDR labels per cell, by scanning the rows of each cell.
pub fn mdr_cells(ds: &Dataset, train: &[usize], combo: &[usize]) -> Vec<Label> {
    let n = train.len() as i128;
    let cases = train.iter().filter(|&&j| is_case(ds, j)).count() as i128;
    let n_cells = 3usize.pow(combo.len() as u32);
    (0..n_cells)
        .map(|c| {
            let inside: Vec<usize> = train.iter().copied().filter(|&j| cell_of(ds.row(j), combo) == c).collect();
            let in_cases = inside.iter().filter(|&&j| is_case(ds, j)).count() as i128;
            if !inside.is_empty() && Frac::new(in_cases, inside.len() as i128) > Frac::new(cases, n) {
                Label::Case
            } else {
                Label::Control
            }
        })
        .collect()
}

/// Independent-rule labels: case iff the product of per-factor class
/// frequencies is larger for cases, `pseudo` added to every level count.
pub fn mdrir_cells(ds: &Dataset, train: &[usize], combo: &[usize], pseudo: i128) -> Vec<Label> {
    let class_rows = |case: bool| -> Vec<usize> { train.iter().copied().filter(|&j| is_case(ds, j) == case).collect() };
    let (case_rows, ctrl_rows) = (class_rows(true), class_rows(false));
    let n_cells = 3usize.pow(combo.len() as u32);
    (0..n_cells)
        .map(|c| {
            let mut levels = vec![0u8; combo.len()];
            let mut rest = c;
            for slot in levels.iter_mut().rev() {
                *slot = (rest % 3) as u8;
                rest /= 3;
            }
            let product = |rows: &[usize]| -> Frac {
                let mut p = Frac::new(1, 1);
                for (k, &i) in combo.iter().enumerate() {
                    let hits = rows.iter().filter(|&&j| ds.value(j, i) == levels[k]).count() as i128;
                    p = p.mul(Frac::new(hits + pseudo, rows.len() as i128 + 3 * pseudo));
                }
                p
            };
            if product(&case_rows) > product(&ctrl_rows) { Label::Case } else { Label::Control }
        })
        .collect()
}

/// Exact K-fold balanced error of a cell-labelling rule, or `None` when a
/// fold or its training complement misses a class.
pub fn cv_exact<F>(ds: &Dataset, k: usize, fit: F) -> Option<(Frac, Vec<[Frac; 2]>)>
where
    F: Fn(&[usize]) -> Box<dyn Fn(&[u8]) -> Label>,
{
    let n = ds.n_rows();
    let plan = folds(n, k);
    let mut per_fold = Vec::new();
    let mut sums = [Frac::zero(); 2];
    for fold in &plan {
        let train: Vec<usize> = (0..n).filter(|j| !fold.contains(j)).collect();
        for rows in [fold, &train] {
            let cases = rows.iter().filter(|&&j| is_case(ds, j)).count();
            if cases == 0 || cases == rows.len() {
                return None;
            }
        }
        let rule = fit(&train);
        let mut rates = [Frac::zero(); 2];
        for (class, label) in [(0, Label::Control), (1, Label::Case)] {
            let members: Vec<usize> = fold.iter().copied().filter(|&j| ds.label(j) == label).collect();
            let missed = members.iter().filter(|&&j| rule(ds.row(j)) != label).count();
            rates[class] = Frac::new(missed as i128, members.len() as i128);
            sums[class] = sums[class].add(rates[class]);
        }
        per_fold.push(rates);
    }
    let value = sums[0].add(sums[1]).mul(Frac::new(1, 2 * k as i128));
    Some((value, per_fold))
}

/// MDR prediction rule for the given cell labels.
pub fn cell_rule(combo: Vec<usize>, cells: Vec<Label>) -> Box<dyn Fn(&[u8]) -> Label> {
    Box::new(move |x| cells[cell_of(x, &combo)])
}

/// All non-empty subsets of 0..n of size at most `max_order`, lexicographic
/// within each size.
pub fn subsets(n: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if s.len() <= max_order {
            out.push(s);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// Split minimizing the child impurity, scanning columns then thresholds
/// and keeping the first minimum; `None` unless strictly below the parent.
pub fn best_split(ds: &Dataset, rows: &[usize], criterion: SplitCriterion, min_node: usize) -> Option<Split> {
    // Gini as 2a(n-a)/n^2; the weighted form multiplies by n.
    let impurity = |part: &[usize]| -> Frac {
        let n = part.len() as i128;
        if n == 0 {
            return Frac::zero();
        }
        let a = part.iter().filter(|&&j| is_case(ds, j)).count() as i128;
        match criterion {
            SplitCriterion::Weighted => Frac::new(2 * a * (n - a), n),
            SplitCriterion::Unweighted => Frac::new(2 * a * (n - a), n * n),
        }
    };
    let parent = impurity(rows);
    let mut best: Option<(Frac, Split)> = None;
    for column in 0..ds.n_predictors() {
        for threshold in 0..2u8 {
            let low: Vec<usize> = rows.iter().copied().filter(|&j| ds.value(j, column) <= threshold).collect();
            let high: Vec<usize> = rows.iter().copied().filter(|&j| ds.value(j, column) > threshold).collect();
            if low.len() < min_node.max(1) || high.len() < min_node.max(1) {
                continue;
            }
            let score = impurity(&low).add(impurity(&high));
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, Split { column, threshold }));
            }
        }
    }
    best.filter(|(s, _)| *s < parent).map(|(_, s)| s)
}

/// Every tree over `pool` with at most `r_max` leaves.
pub fn all_trees(pool: &[usize], r_max: usize) -> Vec<ExprTree> {
    let mut by_size: Vec<Vec<ExprTree>> = vec![Vec::new(); r_max + 1];
    if r_max >= 1 {
        by_size[1] = pool.iter().map(|&v| ExprTree::Leaf(v)).collect();
    }
    for size in 2..=r_max {
        let mut trees = Vec::new();
        for left in 1..size {
            for op in [Op::Sum, Op::Product] {
                for l in &by_size[left] {
                    for r in &by_size[size - left] {
                        trees.push(ExprTree::Knot(op, Box::new(l.clone()), Box::new(r.clone())));
                    }
                }
            }
        }
        by_size[size] = trees;
    }
    by_size.into_iter().flatten().collect()
}

fn subtree<'a>(t: &'a ExprTree, path: &[bool]) -> Option<&'a ExprTree> {
    match (path.split_first(), t) {
        (None, _) => Some(t),
        (Some((&right, rest)), ExprTree::Knot(_, l, r)) => subtree(if right { r } else { l }, rest),
        _ => None,
    }
}

// Whether `a` and `b` agree everywhere outside the subtree at `path`.
fn same_outside(a: &ExprTree, b: &ExprTree, path: &[bool]) -> bool {
    match path.split_first() {
        None => true,
        Some((&right, rest)) => match (a, b) {
            (ExprTree::Knot(oa, la, ra), ExprTree::Knot(ob, lb, rb)) if oa == ob => {
                if right { la == lb && same_outside(ra, rb, rest) } else { ra == rb && same_outside(la, lb, rest) }
            }
            _ => false,
        },
    }
}

fn paths(t: &ExprTree, prefix: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
    out.push(prefix.clone());
    if let ExprTree::Knot(_, l, r) = t {
        prefix.push(false);
        paths(l, prefix, out);
        prefix.pop();
        prefix.push(true);
        paths(r, prefix, out);
        prefix.pop();
    }
}

/// Every move kind that turns `from` into `to` by rewriting one subtree,
/// found by locating candidate rewrite spots along paths.
pub fn move_kinds(from: &ExprTree, to: &ExprTree, pool: &[usize]) -> Vec<MoveKind> {
    use ExprTree::{Knot, Leaf};
    let mut found = Vec::new();
    let mut all = Vec::new();
    paths(from, &mut Vec::new(), &mut all);
    for path in all {
        let (Some(a), Some(b)) = (subtree(from, &path), subtree(to, &path)) else { continue };
        if !same_outside(from, to, &path) {
            continue;
        }
        let in_pool = |v: &usize| pool.contains(v);
        let mut hit = |k: MoveKind| {
            if !found.contains(&k) {
                found.push(k);
            }
        };
        match (a, b) {
            (Leaf(u), Leaf(v)) if u != v && in_pool(v) => hit(MoveKind::VariableChange),
            (Knot(o1, l1, r1), Knot(o2, l2, r2)) if o1 != o2 && l1 == l2 && r1 == r2 => hit(MoveKind::OperatorChange),
            _ => {}
        }
        if let Knot(_, l, r) = a {
            if **l == *b || **r == *b {
                if l.is_leaf() && r.is_leaf() {
                    hit(MoveKind::DeleteLeaf);
                } else {
                    hit(MoveKind::BranchPruning);
                }
            }
        }
        if let (Leaf(u), Knot(_, l, r)) = (a, b) {
            if let (Leaf(lu), Leaf(v)) = (&**l, &**r) {
                if lu == u && in_pool(v) {
                    hit(MoveKind::SplitLeaf);
                }
            }
        }
        if let Knot(_, l, r) = b {
            if let Leaf(v) = &**l {
                if **r == *a && in_pool(v) && *a != Leaf(*v) {
                    hit(MoveKind::BranchGrowing);
                }
            }
        }
    }
    found.sort();
    found
}

/// Balanced error of a labelling under a law given by integer weights
/// `w[cell][class]`, scaled by 2 * W_control * W_case so it is an integer.
pub fn law_error_scaled(w: &[[u64; 2]], predict_case: &[bool]) -> u128 {
    let w0: u128 = w.iter().map(|c| c[0] as u128).sum();
    let w1: u128 = w.iter().map(|c| c[1] as u128).sum();
    let miss_case: u128 = w.iter().zip(predict_case).filter(|(_, p)| !**p).map(|(c, _)| c[1] as u128).sum();
    let miss_ctrl: u128 = w.iter().zip(predict_case).filter(|(_, p)| **p).map(|(c, _)| c[0] as u128).sum();
    miss_case * w0 + miss_ctrl * w1
}

/// Random tree over `pool` with between 1 and `max_leaves` leaves.
pub fn random_tree(pool: &[usize], max_leaves: usize, rng: &mut impl rand::Rng) -> ExprTree {
    let leaves = rng.random_range(1..=max_leaves);
    grow_random(pool, leaves, rng)
}

fn grow_random(pool: &[usize], leaves: usize, rng: &mut impl rand::Rng) -> ExprTree {
    if leaves == 1 {
        return ExprTree::Leaf(pool[rng.random_range(0..pool.len())]);
    }
    let left = rng.random_range(1..leaves);
    let op = if rng.random_bool(0.5) { Op::Sum } else { Op::Product };
    ExprTree::Knot(op, Box::new(grow_random(pool, left, rng)), Box::new(grow_random(pool, leaves - left, rng)))
}
