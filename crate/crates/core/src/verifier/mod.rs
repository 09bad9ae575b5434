//! Bound propagation through a [`Model`] with back-substitution.
//!
//! Every neuron carries concrete bounds and an affine lower and upper
//! relaxation in terms of its predecessor layer. Concrete bounds of affine
//! layers come from substituting relaxations backwards, layer by layer, down
//! to the input abstraction and concretizing over the parameter box.
//!
//! Neurons of per-point layers are indexed `point × features + feature`;
//! global layers have one neuron per feature.

mod certify;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maxpool::{self, MaxPoolStrategy, NodeRef, TreeOracle, TreeRelaxation, DEFAULT_GROUP_SIZE};
use crate::network::{LayerKind, Model, Shape, INPUT_ID};
use crate::taylor::{taylor_bounds, LinearBounds};
use crate::transforms::{ParamBox, PointCloud, Transform};

pub use certify::{
    certify_classification, certify_segmentation, CellResult, Outcome, Perturbation, PointVerdict,
    SegmentationVerdict, Verdict,
};

/// Sound affine bounds on the input coordinates in terms of the
/// transformation parameters. An ℓ∞ box has no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct InputAbstraction {
    bounds: LinearBounds,
}

impl InputAbstraction {
    pub fn from_bounds(bounds: LinearBounds) -> Self {
        InputAbstraction { bounds }
    }

    /// Taylor bounds of `transform` applied to `cloud` over `params`.
    pub fn from_transform(transform: &dyn Transform, cloud: &PointCloud, params: &ParamBox) -> Result<Self> {
        Ok(Self::from_bounds(taylor_bounds(transform, cloud, params)?))
    }

    pub fn bounds(&self) -> &LinearBounds {
        &self.bounds
    }

    pub fn num_points(&self) -> usize {
        self.bounds.num_points()
    }
}

/// Every coordinate of `cloud` perturbed independently by at most `eps`.
pub fn linf_input(cloud: &PointCloud, eps: f64) -> Result<InputAbstraction> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be a finite non-negative number, got {eps}")));
    }
    let coords = cloud.coordinates();
    let lo = coords.iter().map(|c| c - eps).collect();
    let hi = coords.iter().map(|c| c + eps).collect();
    Ok(InputAbstraction::from_bounds(LinearBounds::constant(lo, hi)?))
}

/// Max-pool relaxation settings.
#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub strategy: Arc<dyn MaxPoolStrategy>,
    pub group_size: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            strategy: Arc::new(maxpool::ImprovedPool),
            group_size: DEFAULT_GROUP_SIZE,
        }
    }
}

impl VerifierConfig {
    pub fn new(strategy: Arc<dyn MaxPoolStrategy>, group_size: usize) -> Self {
        VerifierConfig { strategy, group_size }
    }
}

/// ReLU relaxation `lower_slope·x <= relu(x) <= upper_slope·x + upper_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluRelaxation {
    pub lower_slope: f64,
    pub upper_slope: f64,
    pub upper_offset: f64,
}

/// ReLU relaxation for inputs in `[l, u]`. A crossing neuron gets the chord
/// as upper bound and `λx` below, with `λ = 1` iff `u >= |l|`.
pub fn relax_relu(l: f64, u: f64) -> ReluRelaxation {
    if u <= 0.0 {
        ReluRelaxation {
            lower_slope: 0.0,
            upper_slope: 0.0,
            upper_offset: 0.0,
        }
    } else if l >= 0.0 {
        ReluRelaxation {
            lower_slope: 1.0,
            upper_slope: 1.0,
            upper_offset: 0.0,
        }
    } else {
        let slope = u / (u - l);
        ReluRelaxation {
            lower_slope: if u >= -l { 1.0 } else { 0.0 },
            upper_slope: slope,
            upper_offset: -slope * l,
        }
    }
}

#[derive(Debug, Clone)]
enum Relax {
    /// Exactly affine; back-substitution reads the model layer.
    Exact,
    Relu(Vec<ReluRelaxation>),
    MaxPool(Vec<TreeRelaxation>),
}

#[derive(Debug, Clone)]
struct LayerState {
    lo: Vec<f64>,
    hi: Vec<f64>,
    relax: Relax,
}

/// Per-layer bounds of one query.
#[derive(Debug, Clone)]
pub struct Propagation<'m> {
    model: &'m Model,
    input: InputAbstraction,
    points: usize,
    layers: Vec<LayerState>,
}

/// Sparse coefficients over the neurons of one slot: one optional block of
/// `features` coefficients per point (a single block for global layers).
type Blocks = Vec<Option<Vec<f64>>>;

/// An affine expression over the neurons of one layer (slot `0` is the input
/// cloud, slot `i + 1` the layer at position `i`).
#[derive(Debug, Clone)]
pub struct Expression {
    slot: usize,
    blocks: Blocks,
    constant: f64,
}

impl<'m> Propagation<'m> {
    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn input(&self) -> &InputAbstraction {
        &self.input
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    /// Number of propagated layers.
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Concrete bounds of the layer at topological position `pos`.
    pub fn bounds(&self, pos: usize) -> (&[f64], &[f64]) {
        (&self.layers[pos].lo, &self.layers[pos].hi)
    }

    /// Concrete bounds of the input coordinates.
    pub fn input_bounds(&self) -> Vec<(f64, f64)> {
        self.input.bounds().concrete_ranges()
    }

    fn slot_shape(&self, slot: usize) -> Shape {
        if slot == 0 {
            Shape::PerPoint(3)
        } else {
            self.model.shape(slot - 1)
        }
    }

    fn slot_of(&self, id: u32) -> usize {
        if id == INPUT_ID {
            0
        } else {
            self.model.position(id).expect("validated model") + 1
        }
    }

    fn block_count(&self, shape: Shape) -> usize {
        if shape.is_per_point() {
            self.points
        } else {
            1
        }
    }

    /// The zero expression over the layer at position `pos`.
    pub fn expression(&self, pos: usize) -> Expression {
        let slot = pos + 1;
        Expression {
            slot,
            blocks: vec![None; self.block_count(self.slot_shape(slot))],
            constant: 0.0,
        }
    }

    /// Adds `coef` times neuron `neuron` of the expression's layer.
    pub fn add_term(&self, expr: &mut Expression, neuron: usize, coef: f64) {
        let d = self.slot_shape(expr.slot).features();
        let block = expr.blocks[neuron / d].get_or_insert_with(|| vec![0.0; d]);
        block[neuron % d] += coef;
    }

    /// Sound lower bound of an expression over the input abstraction.
    pub fn lower_bound(&self, expr: &Expression) -> f64 {
        let mut accs: Vec<Blocks> = (0..expr.slot)
            .map(|s| vec![None; self.block_count(self.slot_shape(s))])
            .collect();
        accs.push(expr.blocks.clone());
        let mut constant = expr.constant;
        for slot in (1..=expr.slot).rev() {
            let acc = std::mem::take(&mut accs[slot]);
            if acc.iter().all(Option::is_none) {
                continue;
            }
            constant += self.substitute(slot - 1, &acc, &mut accs);
        }
        constant + self.concretize_input(&accs[0])
    }

    /// Sound upper bound of an expression.
    pub fn upper_bound(&self, expr: &Expression) -> f64 {
        let neg = Expression {
            slot: expr.slot,
            blocks: expr
                .blocks
                .iter()
                .map(|b| b.as_ref().map(|v| v.iter().map(|c| -c).collect()))
                .collect(),
            constant: -expr.constant,
        };
        -self.lower_bound(&neg)
    }

    /// Sound lower bound of `neuron_a − neuron_b`, both in layer `pos`.
    pub fn difference_lower(&self, pos: usize, a: usize, b: usize) -> f64 {
        let mut e = self.expression(pos);
        self.add_term(&mut e, a, 1.0);
        self.add_term(&mut e, b, -1.0);
        self.lower_bound(&e)
    }

    fn concretize_input(&self, acc: &Blocks) -> f64 {
        let lb = self.input.bounds();
        let k = lb.param_count();
        let mut w = vec![0.0; k];
        let mut constant = 0.0;
        for (p, block) in acc.iter().enumerate() {
            let Some(block) = block else { continue };
            for (c, &a) in block.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let side = if a > 0.0 { lb.lower(p, c) } else { lb.upper(p, c) };
                constant += a * side.bias;
                for (wi, s) in w.iter_mut().zip(side.weights) {
                    *wi += a * s;
                }
            }
        }
        let params = lb.params();
        constant
            + w.iter()
                .zip(params.lo().iter().zip(params.hi()))
                .map(|(wi, (l, h))| (wi * l).min(wi * h))
                .sum::<f64>()
    }

    /// Replaces the coefficients `acc` on layer `pos` by coefficients on its
    /// inputs (added into `accs`), choosing the lower relaxation for positive
    /// coefficients. Returns the constant term.
    fn substitute(&self, pos: usize, acc: &Blocks, accs: &mut [Blocks]) -> f64 {
        let layer = &self.model.layers()[pos];
        let state = &self.layers[pos];
        let d = self.model.shape(pos).features();
        let src = self.slot_of(layer.inputs[0]);
        let src_d = self.slot_shape(src).features();
        let mut constant = 0.0;
        match (&layer.kind, &state.relax) {
            (LayerKind::PointwiseLinear(dense) | LayerKind::Linear(dense), _) => {
                for (b, block) in acc.iter().enumerate() {
                    let Some(block) = block else { continue };
                    let out = block_mut(accs, src, b, src_d);
                    for (o, &a) in block.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        constant += a * dense.bias[o];
                        for (t, w) in out.iter_mut().zip(dense.row(o)) {
                            *t += a * w;
                        }
                    }
                }
            }
            (LayerKind::BatchNorm(bn), _) => {
                let affine = bn.affine();
                for (b, block) in acc.iter().enumerate() {
                    let Some(block) = block else { continue };
                    let out = block_mut(accs, src, b, src_d);
                    for (f, &a) in block.iter().enumerate() {
                        out[f] += a * affine[f].0;
                        constant += a * affine[f].1;
                    }
                }
            }
            (LayerKind::ReLU, Relax::Relu(relax)) => {
                for (b, block) in acc.iter().enumerate() {
                    let Some(block) = block else { continue };
                    let out = block_mut(accs, src, b, src_d);
                    for (f, &a) in block.iter().enumerate() {
                        let r = relax[b * d + f];
                        if a > 0.0 {
                            out[f] += a * r.lower_slope;
                        } else if a < 0.0 {
                            out[f] += a * r.upper_slope;
                            constant += a * r.upper_offset;
                        }
                    }
                }
            }
            (LayerKind::GlobalMaxPool, Relax::MaxPool(trees)) => {
                let Some(block) = &acc[0] else { return 0.0 };
                let mut leaf = vec![0.0; self.points];
                for (f, &a) in block.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    leaf.iter_mut().for_each(|v| *v = 0.0);
                    trees[f].expand(trees[f].tree.root(), a, &mut leaf, &mut constant);
                    for (p, &c) in leaf.iter().enumerate() {
                        if c != 0.0 {
                            block_mut(accs, src, p, src_d)[f] += c;
                        }
                    }
                }
            }
            (LayerKind::GlobalAvgPool, _) => {
                let Some(block) = &acc[0] else { return 0.0 };
                let inv = 1.0 / self.points as f64;
                for p in 0..self.points {
                    let out = block_mut(accs, src, p, src_d);
                    for (t, a) in out.iter_mut().zip(block) {
                        *t += a * inv;
                    }
                }
            }
            (LayerKind::Repeat, _) => {
                let out = block_mut(accs, src, 0, src_d);
                for block in acc.iter().flatten() {
                    for (t, a) in out.iter_mut().zip(block) {
                        *t += a;
                    }
                }
            }
            (LayerKind::Concatenate, _) => {
                let mut offset = 0;
                for id in &layer.inputs {
                    let slot = self.slot_of(*id);
                    let width = self.slot_shape(slot).features();
                    for (b, block) in acc.iter().enumerate() {
                        let Some(block) = block else { continue };
                        let part = &block[offset..offset + width];
                        if part.iter().all(|a| *a == 0.0) {
                            continue;
                        }
                        let out = block_mut(accs, slot, b, width);
                        for (t, a) in out.iter_mut().zip(part) {
                            *t += a;
                        }
                    }
                    offset += width;
                }
            }
            (LayerKind::Output, _) => {
                for (b, block) in acc.iter().enumerate() {
                    let Some(block) = block else { continue };
                    let out = block_mut(accs, src, b, src_d);
                    for (t, a) in out.iter_mut().zip(block) {
                        *t += a;
                    }
                }
            }
            (kind, _) => unreachable!("layer {} has no relaxation for {}", layer.id, kind.name()),
        }
        constant
    }

    /// Concrete bounds of every neuron of layer `pos` by back-substitution.
    fn affine_bounds(&self, pos: usize) -> (Vec<f64>, Vec<f64>) {
        let neurons = self.model.shape(pos).neurons(self.points);
        (0..neurons)
            .into_par_iter()
            .map(|i| {
                let mut e = self.expression(pos);
                self.add_term(&mut e, i, 1.0);
                (self.lower_bound(&e), self.upper_bound(&e))
            })
            .unzip()
    }

    fn source_bounds(&self, id: u32) -> (Vec<f64>, Vec<f64>) {
        if id == INPUT_ID {
            self.input_bounds().into_iter().unzip()
        } else {
            let s = &self.layers[self.model.position(id).expect("validated model")];
            (s.lo.clone(), s.hi.clone())
        }
    }
}

fn block_mut(accs: &mut [Blocks], slot: usize, b: usize, width: usize) -> &mut Vec<f64> {
    accs[slot][b].get_or_insert_with(|| vec![0.0; width])
}

/// Tree oracle backed by back-substitution through the layers below a pool.
struct PoolOracle<'p, 'm> {
    prop: &'p Propagation<'m>,
    source_slot: usize,
    feature: usize,
}

impl PoolOracle<'_, '_> {
    fn lower(&self, relax: &TreeRelaxation, terms: &[(NodeRef, f64)]) -> f64 {
        let n = self.prop.points;
        let mut leaf = vec![0.0; n];
        let mut constant = 0.0;
        for (r, c) in terms {
            relax.expand(*r, *c, &mut leaf, &mut constant);
        }
        let d = self.prop.slot_shape(self.source_slot).features();
        let blocks = leaf
            .iter()
            .map(|&c| {
                (c != 0.0).then(|| {
                    let mut b = vec![0.0; d];
                    b[self.feature] = c;
                    b
                })
            })
            .collect();
        let expr = Expression {
            slot: self.source_slot,
            blocks,
            constant,
        };
        self.prop.lower_bound(&expr)
    }
}

impl TreeOracle for PoolOracle<'_, '_> {
    fn diff_lower(&self, relax: &TreeRelaxation, a: NodeRef, b: NodeRef) -> Option<f64> {
        Some(self.lower(relax, &[(a, 1.0), (b, -1.0)]))
    }

    fn refine(&self, relax: &TreeRelaxation, node: usize, interval: (f64, f64)) -> (f64, f64) {
        let r = NodeRef::Node(node);
        let lo = self.lower(relax, &[(r, 1.0)]);
        let hi = -self.lower(relax, &[(r, -1.0)]);
        (lo.max(interval.0), hi.min(interval.1))
    }
}

/// Propagates the input abstraction through every layer of the model.
pub fn propagate<'m>(model: &'m Model, input: &InputAbstraction, config: &VerifierConfig) -> Result<Propagation<'m>> {
    let points = input.num_points();
    if model.num_points() != 0 && points != model.num_points() {
        return Err(Error::ShapeMismatch {
            layer: INPUT_ID,
            message: format!("model expects {} points, input has {points}", model.num_points()),
        });
    }
    let mut prop = Propagation {
        model,
        input: input.clone(),
        points,
        layers: Vec::with_capacity(model.layers().len()),
    };
    for (pos, layer) in model.layers().iter().enumerate() {
        let state = match &layer.kind {
            LayerKind::PointwiseLinear(_)
            | LayerKind::Linear(_)
            | LayerKind::BatchNorm(_)
            | LayerKind::GlobalAvgPool => {
                // Placeholder so back-substitution can see this layer's kind.
                prop.layers.push(LayerState {
                    lo: Vec::new(),
                    hi: Vec::new(),
                    relax: Relax::Exact,
                });
                let (lo, hi) = prop.affine_bounds(pos);
                prop.layers.pop();
                LayerState {
                    lo,
                    hi,
                    relax: Relax::Exact,
                }
            }
            LayerKind::ReLU => {
                let (l, u) = prop.source_bounds(layer.inputs[0]);
                let relax: Vec<ReluRelaxation> = l.iter().zip(&u).map(|(l, u)| relax_relu(*l, *u)).collect();
                LayerState {
                    lo: l.iter().map(|v| v.max(0.0)).collect(),
                    hi: u.iter().map(|v| v.max(0.0)).collect(),
                    relax: Relax::Relu(relax),
                }
            }
            LayerKind::GlobalMaxPool => {
                let src = prop.slot_of(layer.inputs[0]);
                let d = prop.slot_shape(src).features();
                let (l, u) = prop.source_bounds(layer.inputs[0]);
                let trees = (0..d)
                    .into_par_iter()
                    .map(|f| {
                        let leaves: Vec<(f64, f64)> = (0..points).map(|p| (l[p * d + f], u[p * d + f])).collect();
                        let tree = maxpool::tree_for(points, config.group_size, config.strategy.as_ref())?;
                        let oracle = PoolOracle {
                            prop: &prop,
                            source_slot: src,
                            feature: f,
                        };
                        maxpool::relax_tree(tree, leaves, config.strategy.as_ref(), &oracle)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (lo, hi) = trees.iter().map(TreeRelaxation::root_bounds).unzip();
                LayerState {
                    lo,
                    hi,
                    relax: Relax::MaxPool(trees),
                }
            }
            LayerKind::Repeat => {
                let (l, u) = prop.source_bounds(layer.inputs[0]);
                LayerState {
                    lo: l.repeat(points),
                    hi: u.repeat(points),
                    relax: Relax::Exact,
                }
            }
            LayerKind::Concatenate => {
                let parts: Vec<(Vec<f64>, Vec<f64>, usize)> = layer
                    .inputs
                    .iter()
                    .map(|id| {
                        let (l, u) = prop.source_bounds(*id);
                        (l, u, model.shape_of(*id).features())
                    })
                    .collect();
                let rows = prop.block_count(model.shape(pos));
                let (mut lo, mut hi) = (Vec::new(), Vec::new());
                for r in 0..rows {
                    for (l, u, w) in &parts {
                        lo.extend_from_slice(&l[r * w..(r + 1) * w]);
                        hi.extend_from_slice(&u[r * w..(r + 1) * w]);
                    }
                }
                LayerState {
                    lo,
                    hi,
                    relax: Relax::Exact,
                }
            }
            LayerKind::Output => {
                let (lo, hi) = prop.source_bounds(layer.inputs[0]);
                LayerState {
                    lo,
                    hi,
                    relax: Relax::Exact,
                }
            }
        };
        if state.lo.iter().chain(&state.hi).any(|v| !v.is_finite()) {
            return Err(Error::Overflow { layer: layer.id });
        }
        prop.layers.push(state);
    }
    Ok(prop)
}

/// Mean bound width of one layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LayerGap {
    pub id: u32,
    pub kind: &'static str,
    pub mean_gap: f64,
}

/// Mean `hi − lo` over the neurons of each layer, in topological order.
pub fn layer_gap_report(prop: &Propagation<'_>) -> Vec<LayerGap> {
    prop.model
        .layers()
        .iter()
        .zip(&prop.layers)
        .map(|(layer, s)| LayerGap {
            id: layer.id,
            kind: layer.kind.name(),
            mean_gap: s.hi.iter().zip(&s.lo).map(|(h, l)| h - l).sum::<f64>() / s.lo.len().max(1) as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Dense, LayerSpec, Task};
    use crate::transforms::Point3;

    #[test]
    fn relu_rules() {
        let r = relax_relu(-1.0, 1.0);
        assert_eq!((r.upper_slope, r.upper_offset, r.lower_slope), (0.5, 0.5, 1.0));
        let r = relax_relu(-3.0, 1.0);
        assert_eq!((r.upper_slope, r.upper_offset, r.lower_slope), (0.25, 0.75, 0.0));
        assert_eq!(relax_relu(2.0, 3.0).lower_slope, 1.0);
        assert_eq!(relax_relu(-2.0, -1.0).upper_slope, 0.0);
    }

    fn cloud() -> PointCloud {
        PointCloud::new(vec![Point3::new(0.5, 1.0, 2.0), Point3::new(0.0, 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn affine_network_is_exact() {
        let d = Dense::new(3, 2, vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0], vec![0.1, -0.2]);
        let model = Model::new(
            vec![
                LayerSpec::new(1, LayerKind::PointwiseLinear(d.clone()), vec![0]),
                LayerSpec::new(2, LayerKind::Output, vec![1]),
            ],
            Task::Segmentation { num_parts: 2 },
            0,
        )
        .unwrap();
        let eps = 0.1;
        let prop = propagate(&model, &linf_input(&cloud(), eps).unwrap(), &VerifierConfig::default()).unwrap();
        let (lo, hi) = prop.bounds(1);
        let coords = cloud().coordinates();
        for p in 0..2 {
            for o in 0..2 {
                let centre: f64 = d.row(o).iter().zip(&coords[p * 3..p * 3 + 3]).map(|(w, x)| w * x).sum::<f64>() + d.bias[o];
                let radius: f64 = d.row(o).iter().map(|w| w.abs() * eps).sum();
                assert!((lo[p * 2 + o] - (centre - radius)).abs() < 1e-12);
                assert!((hi[p * 2 + o] - (centre + radius)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn avg_pool_is_exact() {
        // x-coordinates in [0, 1] and [1, 3].
        let lb = LinearBounds::constant(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        let d = Dense::new(3, 1, vec![1.0, 0.0, 0.0], vec![0.0]);
        let model = Model::new(
            vec![
                LayerSpec::new(1, LayerKind::PointwiseLinear(d), vec![0]),
                LayerSpec::new(2, LayerKind::GlobalAvgPool, vec![1]),
                LayerSpec::new(3, LayerKind::Output, vec![2]),
            ],
            Task::Classification { num_classes: 1 },
            0,
        )
        .unwrap();
        let prop = propagate(&model, &InputAbstraction::from_bounds(lb), &VerifierConfig::default()).unwrap();
        assert_eq!(prop.bounds(1), (&[0.5][..], &[2.0][..]));
    }

    #[test]
    fn negative_epsilon_is_rejected() {
        assert!(linf_input(&cloud(), -0.1).is_err());
        let zero = linf_input(&cloud(), 0.0).unwrap();
        assert!(zero.bounds().concrete_ranges().iter().all(|(l, h)| l == h));
    }
}
