//! Relaxations of `y = max_i x_i` for global max pooling.
//!
//! Each group of inputs gets an affine lower and upper bound on `y` in terms
//! of the group's inputs. Large pools are split into a balanced tree of small
//! groups whose outputs feed the next level.
//!
//! Strategies:
//!
//! * `interval`: constant bounds `max l_i <= y <= max u_i`, one flat group.
//! * `baseline`: `y >= x_j` for `j = argmax l_i` and `y <= max u_i`, one flat
//!   group.
//! * `improved`: dominance shortcut, then the best upper facet of the convex
//!   hull of the graph of `max` over the input box ([`hull_candidates`]),
//!   grouped into a tree.

mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use tree::{grouped_maxpool, pool_tree, relax_tree, NodeRef, PoolTree, TreeOracle, TreeRelaxation};
pub(crate) use tree::tree_for;

/// Default number of inputs per group for grouped strategies.
pub const DEFAULT_GROUP_SIZE: usize = 4;

/// Largest accepted group size.
pub const MAX_GROUP_SIZE: usize = 12;

/// Fallback margin: a hull candidate is used only if its upper
/// concretization is below `u_max + FALLBACK_MARGIN`.
pub const FALLBACK_MARGIN: f64 = 0.01;

/// `coeffs · x + constant` over the inputs of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBound {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl AffineBound {
    pub fn constant(g: usize, value: f64) -> Self {
        AffineBound {
            coeffs: vec![0.0; g],
            constant: value,
        }
    }

    /// The bound `x_j`.
    pub fn input(g: usize, j: usize) -> Self {
        let mut coeffs = vec![0.0; g];
        coeffs[j] = 1.0;
        AffineBound { coeffs, constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }

    /// Range over the box `bounds`.
    pub fn concretize(&self, bounds: &[(f64, f64)]) -> (f64, f64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (c, (l, u)) in self.coeffs.iter().zip(bounds) {
            let (a, b) = (c * l, c * u);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }

    /// `Σ |c_i| (u_i − l_i)`.
    pub fn width(&self, bounds: &[(f64, f64)]) -> f64 {
        self.coeffs.iter().zip(bounds).map(|(c, (l, u))| c.abs() * (u - l)).sum()
    }
}

/// How a group was relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxKind {
    /// One input provably dominates; `y` equals it.
    Exact,
    /// Upper bound is a hull facet.
    Hull,
    /// Upper bound is the constant `u_max`.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRelaxation {
    pub lower: AffineBound,
    pub upper: AffineBound,
    pub kind: RelaxKind,
}

/// Inputs of one group: concrete bounds and, optionally, a sound lower bound
/// on `x_j − x_i` derived from the inputs' affine expressions.
pub struct PoolGroup<'a> {
    pub bounds: &'a [(f64, f64)],
    pub diff_lower: Option<&'a dyn Fn(usize, usize) -> f64>,
}

impl<'a> PoolGroup<'a> {
    pub fn new(bounds: &'a [(f64, f64)]) -> Self {
        PoolGroup {
            bounds,
            diff_lower: None,
        }
    }

    pub fn with_differences(bounds: &'a [(f64, f64)], diff_lower: &'a dyn Fn(usize, usize) -> f64) -> Self {
        PoolGroup {
            bounds,
            diff_lower: Some(diff_lower),
        }
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::PoolInvariant("empty pool group".into()));
        }
        if let Some((l, u)) = self.bounds.iter().find(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::PoolInvariant(format!("invalid input bounds [{l}, {u}]")));
        }
        Ok(())
    }
}

/// A strategy for relaxing one max-pool group.
pub trait MaxPoolStrategy: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Whether large pools are split into a tree of groups. Flat strategies
    /// relax the whole pool as one group.
    fn grouped(&self) -> bool;

    fn relax(&self, group: &PoolGroup<'_>) -> Result<GroupRelaxation>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IntervalPool;

#[derive(Debug, Clone, Copy, Default)]
pub struct BaselinePool;

#[derive(Debug, Clone, Copy, Default)]
pub struct ImprovedPool;

fn argmax_lower(bounds: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, (l, _)) in bounds.iter().enumerate() {
        if *l > bounds[best].0 {
            best = i;
        }
    }
    best
}

fn max_upper(bounds: &[(f64, f64)]) -> f64 {
    bounds.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max)
}

fn exact(g: usize, j: usize) -> GroupRelaxation {
    GroupRelaxation {
        lower: AffineBound::input(g, j),
        upper: AffineBound::input(g, j),
        kind: RelaxKind::Exact,
    }
}

impl MaxPoolStrategy for IntervalPool {
    fn name(&self) -> &'static str {
        "interval"
    }

    fn grouped(&self) -> bool {
        false
    }

    fn relax(&self, group: &PoolGroup<'_>) -> Result<GroupRelaxation> {
        group.validate()?;
        let b = group.bounds;
        let g = b.len();
        Ok(GroupRelaxation {
            lower: AffineBound::constant(g, b[argmax_lower(b)].0),
            upper: AffineBound::constant(g, max_upper(b)),
            kind: RelaxKind::Constant,
        })
    }
}

impl MaxPoolStrategy for BaselinePool {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn grouped(&self) -> bool {
        false
    }

    fn relax(&self, group: &PoolGroup<'_>) -> Result<GroupRelaxation> {
        group.validate()?;
        Ok(baseline_bounds(group.bounds))
    }
}

impl MaxPoolStrategy for ImprovedPool {
    fn name(&self) -> &'static str {
        "improved"
    }

    fn grouped(&self) -> bool {
        true
    }

    fn relax(&self, group: &PoolGroup<'_>) -> Result<GroupRelaxation> {
        group.validate()?;
        let g = group.len();
        if let Some(j) = dominance_check(group) {
            return Ok(exact(g, j));
        }
        let (upper, kind) = hull_upper_bound(group.bounds)?;
        Ok(GroupRelaxation {
            lower: AffineBound::input(g, argmax_lower(group.bounds)),
            upper,
            kind,
        })
    }
}

/// `y >= x_j` for the input with the greatest lower bound (first on ties),
/// `y <= max u_i`. A single input is passed through exactly.
pub fn baseline_bounds(bounds: &[(f64, f64)]) -> GroupRelaxation {
    let g = bounds.len();
    if g == 1 {
        return exact(1, 0);
    }
    GroupRelaxation {
        lower: AffineBound::input(g, argmax_lower(bounds)),
        upper: AffineBound::constant(g, max_upper(bounds)),
        kind: RelaxKind::Constant,
    }
}

/// Index `j` such that `x_j >= x_i` for every `i` over the whole abstraction.
///
/// Pairs are first settled by concrete bounds (`l_j >= u_i`); the rest need
/// the group's difference bounds. Candidates are the inputs with the greatest
/// lower and the greatest upper bound.
pub fn dominance_check(group: &PoolGroup<'_>) -> Option<usize> {
    let b = group.bounds;
    if b.len() == 1 {
        return Some(0);
    }
    let by_upper = {
        let mut best = 0;
        for (i, (_, u)) in b.iter().enumerate() {
            if *u > b[best].1 {
                best = i;
            }
        }
        best
    };
    let mut candidates = vec![argmax_lower(b)];
    if by_upper != candidates[0] {
        candidates.push(by_upper);
    }
    candidates.into_iter().find(|&j| {
        (0..b.len()).all(|i| {
            i == j || b[j].0 >= b[i].1 || group.diff_lower.is_some_and(|diff| diff(j, i) >= 0.0)
        })
    })
}

/// A non-vertical upper facet `y <= coeffs · x + constant` of the convex hull
/// of `{(x, max x) : l <= x <= u}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullCandidate {
    pub bound: AffineBound,
    /// `Σ |c_i| (u_i − l_i)`.
    pub width: f64,
}

/// All upper facets of the hull of the graph of `max` over the box.
///
/// Inputs with `u_i <= L = max_j l_j` never exceed the maximum and get zero
/// coefficients. Sorting the rest by upper bound, `u_1 >= … >= u_m > L`, and
/// writing `t_i = (x_i − l_i)/(u_i − l_i)`, the concave envelope of `max` is
///
/// ```text
/// min over k = 2..m+1 of   u_k + Σ_{i<k} (u_i − u_k) t_i,     u_{m+1} = L
/// ```
///
/// (the largest `E[max X]` over random vertices `X` with mean `x` puts the
/// events `X_i = u_i` on disjoint stretches, in order of decreasing `u_i`).
/// Duplicate facets from tied upper bounds are removed. Candidates are sorted
/// by width, then lexicographically by coefficients.
pub fn hull_candidates(bounds: &[(f64, f64)]) -> Vec<HullCandidate> {
    let g = bounds.len();
    let floor = bounds[argmax_lower(bounds)].0;
    let mut active: Vec<usize> = (0..g).filter(|&i| bounds[i].1 > floor).collect();
    // Stable: ties keep index order.
    active.sort_by(|&a, &b| bounds[b].1.total_cmp(&bounds[a].1));
    let levels: Vec<f64> = active.iter().map(|&i| bounds[i].1).chain([floor]).collect();

    let mut out: Vec<HullCandidate> = Vec::new();
    for k in 1..levels.len() {
        let level = levels[k];
        let mut bound = AffineBound::constant(g, level);
        for &i in &active[..k] {
            let (l, u) = bounds[i];
            let slope = (u - level) / (u - l);
            bound.coeffs[i] = slope;
            bound.constant -= slope * l;
        }
        if out.iter().any(|c| c.bound == bound) {
            continue;
        }
        let width = bound.width(bounds);
        out.push(HullCandidate { bound, width });
    }
    if out.is_empty() {
        // Every input is constant at `floor`.
        out.push(HullCandidate {
            bound: AffineBound::constant(g, floor),
            width: 0.0,
        });
    }
    out.sort_by(|a, b| {
        a.width
            .total_cmp(&b.width)
            .then_with(|| lex_cmp(&a.bound.coeffs, &b.bound.coeffs))
    });
    out
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Largest value of `max_i x_i − (c·x + d)` over the box, exact up to
/// rounding: the maximum over the box commutes with the maximum over `i`,
/// and each inner problem is separable.
pub fn max_violation(bound: &AffineBound, bounds: &[(f64, f64)]) -> f64 {
    // Σ_j max over x_j of (−c_j x_j).
    let neg_terms: Vec<f64> = bound
        .coeffs
        .iter()
        .zip(bounds)
        .map(|(c, (l, u))| (-c * l).max(-c * u))
        .collect();
    let total: f64 = neg_terms.iter().sum();
    (0..bounds.len())
        .map(|i| {
            let (l, u) = bounds[i];
            let own = ((1.0 - bound.coeffs[i]) * l).max((1.0 - bound.coeffs[i]) * u);
            total - neg_terms[i] + own - bound.constant
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Raises the constant of `bound` until it dominates `max` over the box,
/// with a margin covering the rounding of the check itself.
fn make_sound(mut bound: AffineBound, bounds: &[(f64, f64)]) -> AffineBound {
    let scale: f64 = bound
        .coeffs
        .iter()
        .zip(bounds)
        .map(|(c, (l, u))| c.abs() * l.abs().max(u.abs()))
        .sum::<f64>()
        + bound.constant.abs()
        + bounds.iter().map(|(l, u)| l.abs().max(u.abs())).fold(0.0, f64::max);
    let slack = 4.0 * (bounds.len() as f64 + 2.0) * f64::EPSILON * scale;
    let violation = max_violation(&bound, bounds);
    bound.constant += violation.max(0.0) + slack;
    bound
}

/// Upper bound from the narrowest hull candidate, or the constant `u_max`
/// if that candidate's upper concretization is not below
/// `u_max + FALLBACK_MARGIN`.
pub fn hull_upper_bound(bounds: &[(f64, f64)]) -> Result<(AffineBound, RelaxKind)> {
    PoolGroup::new(bounds).validate()?;
    let g = bounds.len();
    let u_max = max_upper(bounds);
    let best = hull_candidates(bounds).swap_remove(0);
    let bound = make_sound(best.bound, bounds);
    if bound.concretize(bounds).1 < u_max + FALLBACK_MARGIN {
        Ok((bound, RelaxKind::Hull))
    } else {
        Ok((AffineBound::constant(g, u_max), RelaxKind::Constant))
    }
}

type StrategyFactory = Box<dyn Fn() -> Arc<dyn MaxPoolStrategy> + Send + Sync>;

/// Max-pool strategies by name.
pub struct StrategyRegistry {
    factories: BTreeMap<String, StrategyFactory>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("interval", || Arc::new(IntervalPool));
        r.register("baseline", || Arc::new(BaselinePool));
        r.register("improved", || Arc::new(ImprovedPool));
        r
    }

    pub fn register(&mut self, name: &str, factory: impl Fn() -> Arc<dyn MaxPoolStrategy> + Send + Sync + 'static) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn MaxPoolStrategy>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

/// Looks up a built-in strategy.
pub fn strategy(name: &str) -> Result<Arc<dyn MaxPoolStrategy>> {
    StrategyRegistry::with_builtins().get(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_rule() {
        let r = baseline_bounds(&[(0.0, 2.0), (1.0, 3.0)]);
        assert_eq!(r.lower, AffineBound::input(2, 1));
        assert_eq!(r.upper, AffineBound::constant(2, 3.0));

        let r = baseline_bounds(&[(-1.0, 1.0); 3]);
        assert_eq!(r.lower, AffineBound::input(3, 0));
        assert_eq!(r.upper, AffineBound::constant(3, 1.0));

        assert_eq!(baseline_bounds(&[(0.5, 4.0)]).kind, RelaxKind::Exact);
    }

    #[test]
    fn dominance_by_bounds_and_differences() {
        assert_eq!(dominance_check(&PoolGroup::new(&[(5.0, 6.0), (0.0, 1.0)])), Some(0));
        assert_eq!(dominance_check(&PoolGroup::new(&[(0.0, 2.0), (1.0, 3.0)])), None);
        // x2 = x1 + 1 with overlapping boxes.
        let diff = |j: usize, i: usize| if (j, i) == (1, 0) { 1.0 } else { -1.0 };
        let bounds = [(0.0, 2.0), (1.0, 3.0)];
        assert_eq!(dominance_check(&PoolGroup::with_differences(&bounds, &diff)), Some(1));
    }

    #[test]
    fn unit_square_facets() {
        let c = hull_candidates(&[(0.0, 1.0), (0.0, 1.0)]);
        // y <= 1 and y <= x1 + x2.
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].bound, AffineBound::constant(2, 1.0));
        assert_eq!(c[1].bound.coeffs, vec![1.0, 1.0]);
        assert_eq!(c[1].bound.constant, 0.0);
    }

    #[test]
    fn hull_facet_is_sound_and_not_worse() {
        let bounds = [(0.0, 2.0), (1.0, 3.0), (-1.0, 2.5)];
        let (b, kind) = hull_upper_bound(&bounds).unwrap();
        assert_eq!(kind, RelaxKind::Hull);
        assert!(max_violation(&b, &bounds) <= 0.0);
        assert!(b.concretize(&bounds).1 <= 3.0 + 1e-12);
    }

    #[test]
    fn improved_uses_exact_path_when_dominated() {
        let bounds = [(0.0, 2.0), (10.0, 11.0)];
        let r = ImprovedPool.relax(&PoolGroup::new(&bounds)).unwrap();
        assert_eq!(r.kind, RelaxKind::Exact);
        assert_eq!(r.upper, AffineBound::input(2, 1));
    }

    #[test]
    fn registry_names() {
        let r = StrategyRegistry::with_builtins();
        assert_eq!(r.names().collect::<Vec<_>>(), ["baseline", "improved", "interval"]);
        assert!(matches!(strategy("lp"), Err(Error::UnknownStrategy(_))));
    }
}
