//! PointNet-style models: layer graph, shape validation and concrete
//! evaluation.
//!
//! A model is a DAG of layers. The input point cloud has the reserved id `0`
//! and shape `n × 3`; every other layer has a positive id. Activations are
//! either per-point (`n × d`) or global (`d`).

mod fold;
mod format;
mod io;

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::transforms::PointCloud;

pub use fold::fold_batchnorm;
pub use format::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION, MAX_MODEL_BYTES};
pub use io::{
    check_reference, read_labels, read_points, read_reference, write_labels, write_points, ReferenceCase,
    ReferenceLogits, ReferenceSet,
};

/// Id of the input point cloud in layer input lists.
pub const INPUT_ID: u32 = 0;

/// Affine map `y = W x + b` with `W` stored row-major (`out × in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<f64>, bias: Vec<f64>) -> Self {
        Dense {
            in_features,
            out_features,
            weight,
            bias,
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.in_features..(o + 1) * self.in_features]
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            *y = self.row(o).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o];
        }
    }
}

/// Inference-mode batch normalization over the feature axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Per-feature `(scale, shift)` with `y = scale·x + shift`.
    pub fn affine(&self) -> Vec<(f64, f64)> {
        (0..self.features())
            .map(|f| {
                let scale = self.gamma[f] / (self.var[f] + self.eps).sqrt();
                (scale, self.beta[f] - scale * self.mean[f])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Dense map shared by every point.
    PointwiseLinear(Dense),
    /// Dense map on a global feature vector.
    Linear(Dense),
    BatchNorm(BatchNorm),
    ReLU,
    GlobalMaxPool,
    GlobalAvgPool,
    /// Broadcasts a global feature vector to every point.
    Repeat,
    /// Stacks per-point features of all inputs, in input order.
    Concatenate,
    /// Identity sink carrying the logits.
    Output,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::PointwiseLinear(_) => "pointwise_linear",
            LayerKind::Linear(_) => "linear",
            LayerKind::BatchNorm(_) => "batch_norm",
            LayerKind::ReLU => "relu",
            LayerKind::GlobalMaxPool => "global_max_pool",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Repeat => "repeat",
            LayerKind::Concatenate => "concatenate",
            LayerKind::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub id: u32,
    pub kind: LayerKind,
    pub inputs: Vec<u32>,
}

impl LayerSpec {
    pub fn new(id: u32, kind: LayerKind, inputs: Vec<u32>) -> Self {
        LayerSpec { id, kind, inputs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification { num_classes: usize },
    Segmentation { num_parts: usize },
}

impl Task {
    pub fn num_outputs(&self) -> usize {
        match *self {
            Task::Classification { num_classes } => num_classes,
            Task::Segmentation { num_parts } => num_parts,
        }
    }
}

/// Shape of one activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    PerPoint(usize),
    Global(usize),
}

impl Shape {
    pub fn features(&self) -> usize {
        match *self {
            Shape::PerPoint(d) | Shape::Global(d) => d,
        }
    }

    pub fn is_per_point(&self) -> bool {
        matches!(self, Shape::PerPoint(_))
    }

    /// Number of scalar neurons for a cloud of `n` points.
    pub fn neurons(&self, n: usize) -> usize {
        match *self {
            Shape::PerPoint(d) => n * d,
            Shape::Global(d) => d,
        }
    }
}

/// A validated model. Layers are kept in a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    index: HashMap<u32, usize>,
    task: Task,
    num_points: usize,
}

impl Model {
    /// Validates the layer graph and infers shapes. `num_points == 0` accepts
    /// clouds of any size.
    pub fn new(layers: Vec<LayerSpec>, task: Task, num_points: usize) -> Result<Self> {
        let layers = topological_order(layers)?;
        let mut index = HashMap::new();
        let mut shapes = Vec::with_capacity(layers.len());
        for (pos, layer) in layers.iter().enumerate() {
            let input_shapes: Vec<Shape> = layer
                .inputs
                .iter()
                .map(|id| {
                    if *id == INPUT_ID {
                        Shape::PerPoint(3)
                    } else {
                        shapes[index[id]]
                    }
                })
                .collect();
            shapes.push(infer_shape(layer, &input_shapes, task)?);
            index.insert(layer.id, pos);
        }

        let outputs: Vec<&LayerSpec> = layers.iter().filter(|l| l.kind == LayerKind::Output).collect();
        if outputs.len() != 1 {
            return Err(Error::ShapeMismatch {
                layer: outputs.get(1).map_or(0, |l| l.id),
                message: format!("model must have exactly one output layer, found {}", outputs.len()),
            });
        }
        let consumed: HashSet<u32> = layers.iter().flat_map(|l| l.inputs.iter().copied()).collect();
        if !consumed.contains(&INPUT_ID) {
            return Err(Error::ShapeMismatch {
                layer: INPUT_ID,
                message: "no layer consumes the input point cloud".into(),
            });
        }
        for layer in &layers {
            let is_sink = layer.kind == LayerKind::Output;
            if is_sink && consumed.contains(&layer.id) {
                return Err(Error::ShapeMismatch {
                    layer: layer.id,
                    message: "output layer must be the sink".into(),
                });
            }
            if !is_sink && !consumed.contains(&layer.id) {
                return Err(Error::ShapeMismatch {
                    layer: layer.id,
                    message: "layer output is never used".into(),
                });
            }
        }

        Ok(Model {
            layers,
            shapes,
            index,
            task,
            num_points,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    /// Shape of the layer at topological position `pos`.
    pub fn shape(&self, pos: usize) -> Shape {
        self.shapes[pos]
    }

    /// Topological position of a layer id.
    pub fn position(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Shape of a layer id, with `0` being the input cloud.
    pub fn shape_of(&self, id: u32) -> Shape {
        if id == INPUT_ID {
            Shape::PerPoint(3)
        } else {
            self.shapes[self.index[&id]]
        }
    }

    pub fn output_position(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn check_cloud(&self, cloud: &PointCloud) -> Result<()> {
        if self.num_points != 0 && cloud.len() != self.num_points {
            return Err(Error::ShapeMismatch {
                layer: INPUT_ID,
                message: format!("model expects {} points, cloud has {}", self.num_points, cloud.len()),
            });
        }
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.kind {
                LayerKind::PointwiseLinear(d) | LayerKind::Linear(d) => d.weight.len() + d.bias.len(),
                LayerKind::BatchNorm(bn) => 4 * bn.features(),
                _ => 0,
            })
            .sum()
    }

    /// Logits for the cloud: one row for classification, one row per point
    /// for segmentation.
    pub fn forward(&self, cloud: &PointCloud) -> Result<Activation> {
        Ok(self.forward_all(cloud)?.pop().expect("model has an output layer"))
    }

    /// Activations of every layer in topological order.
    pub fn forward_all(&self, cloud: &PointCloud) -> Result<Vec<Activation>> {
        self.check_cloud(cloud)?;
        self.forward_coordinates(cloud.len(), &cloud.coordinates())
    }

    /// Forward pass from flattened point-major coordinates.
    pub fn forward_coordinates(&self, n: usize, coords: &[f64]) -> Result<Vec<Activation>> {
        let input = Activation::per_point(n, 3, coords.to_vec());
        let mut acts: Vec<Activation> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let get = |id: u32| -> &Activation {
                if id == INPUT_ID {
                    &input
                } else {
                    &acts[self.index[&id]]
                }
            };
            let x = get(layer.inputs[0]);
            let out = match &layer.kind {
                LayerKind::PointwiseLinear(d) | LayerKind::Linear(d) => {
                    let mut data = vec![0.0; x.rows * d.out_features];
                    for r in 0..x.rows {
                        d.apply(x.row(r), &mut data[r * d.out_features..(r + 1) * d.out_features]);
                    }
                    Activation::new(x.rows, d.out_features, x.per_point, data)
                }
                LayerKind::BatchNorm(bn) => {
                    let aff = bn.affine();
                    let data = x
                        .data
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let (s, t) = aff[i % x.cols];
                            s * v + t
                        })
                        .collect();
                    Activation::new(x.rows, x.cols, x.per_point, data)
                }
                LayerKind::ReLU => {
                    let data = x.data.iter().map(|v| v.max(0.0)).collect();
                    Activation::new(x.rows, x.cols, x.per_point, data)
                }
                LayerKind::GlobalMaxPool => {
                    let data = (0..x.cols)
                        .map(|f| (0..x.rows).map(|r| x.get(r, f)).fold(f64::NEG_INFINITY, f64::max))
                        .collect();
                    Activation::global(data)
                }
                LayerKind::GlobalAvgPool => {
                    let data = (0..x.cols)
                        .map(|f| (0..x.rows).map(|r| x.get(r, f)).sum::<f64>() / x.rows as f64)
                        .collect();
                    Activation::global(data)
                }
                LayerKind::Repeat => {
                    let data = (0..n).flat_map(|_| x.data.iter().copied()).collect();
                    Activation::per_point(n, x.cols, data)
                }
                LayerKind::Concatenate => {
                    let parts: Vec<&Activation> = layer.inputs.iter().map(|id| get(*id)).collect();
                    let cols: usize = parts.iter().map(|p| p.cols).sum();
                    let rows = parts[0].rows;
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        for p in &parts {
                            data.extend_from_slice(p.row(r));
                        }
                    }
                    Activation::new(rows, cols, parts[0].per_point, data)
                }
                LayerKind::Output => x.clone(),
            };
            if out.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow { layer: layer.id });
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Predicted class (classification) or per-point predicted parts.
    pub fn predict(&self, cloud: &PointCloud) -> Result<Vec<usize>> {
        let out = self.forward(cloud)?;
        Ok((0..out.rows).map(|r| argmax(out.row(r))).collect())
    }
}

/// Dense row-major activation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub rows: usize,
    pub cols: usize,
    pub per_point: bool,
    pub data: Vec<f64>,
}

impl Activation {
    fn new(rows: usize, cols: usize, per_point: bool, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Activation {
            rows,
            cols,
            per_point,
            data,
        }
    }

    pub fn per_point(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(rows, cols, true, data)
    }

    pub fn global(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self::new(1, cols, false, data)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn topological_order(layers: Vec<LayerSpec>) -> Result<Vec<LayerSpec>> {
    let mut ids = HashSet::new();
    for l in &layers {
        if l.id == INPUT_ID {
            return Err(Error::ShapeMismatch {
                layer: l.id,
                message: "layer id 0 is reserved for the input".into(),
            });
        }
        if !ids.insert(l.id) {
            return Err(Error::ShapeMismatch {
                layer: l.id,
                message: "duplicate layer id".into(),
            });
        }
    }
    for l in &layers {
        if l.inputs.is_empty() {
            return Err(Error::ShapeMismatch {
                layer: l.id,
                message: "layer has no inputs".into(),
            });
        }
        if let Some(missing) = l.inputs.iter().find(|i| **i != INPUT_ID && !ids.contains(*i)) {
            return Err(Error::ShapeMismatch {
                layer: l.id,
                message: format!("input references nonexistent layer {missing}"),
            });
        }
    }

    // Repeatedly take the first declared layer whose inputs are all placed.
    let mut placed: HashSet<u32> = HashSet::from([INPUT_ID]);
    let mut pending: Vec<LayerSpec> = layers;
    let mut ordered = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let Some(next) = pending.iter().position(|l| l.inputs.iter().all(|i| placed.contains(i))) else {
            return Err(Error::ShapeMismatch {
                layer: pending[0].id,
                message: "layer graph contains a cycle".into(),
            });
        };
        let layer = pending.remove(next);
        placed.insert(layer.id);
        ordered.push(layer);
    }
    Ok(ordered)
}

fn infer_shape(layer: &LayerSpec, inputs: &[Shape], task: Task) -> Result<Shape> {
    let mismatch = |message: String| Error::ShapeMismatch {
        layer: layer.id,
        message,
    };
    if !matches!(layer.kind, LayerKind::Concatenate) && inputs.len() != 1 {
        return Err(mismatch(format!(
            "{} takes exactly one input, got {}",
            layer.kind.name(),
            inputs.len()
        )));
    }
    let x = inputs[0];
    let check_dense = |d: &Dense| -> Result<()> {
        if d.weight.len() != d.in_features * d.out_features || d.bias.len() != d.out_features {
            return Err(mismatch(format!(
                "weight/bias sizes {}/{} do not match {}x{}",
                d.weight.len(),
                d.bias.len(),
                d.out_features,
                d.in_features
            )));
        }
        if x.features() != d.in_features {
            return Err(mismatch(format!(
                "expects {} input features, predecessor provides {}",
                d.in_features,
                x.features()
            )));
        }
        Ok(())
    };
    match &layer.kind {
        LayerKind::PointwiseLinear(d) => {
            check_dense(d)?;
            if !x.is_per_point() {
                return Err(mismatch("pointwise layer needs a per-point input".into()));
            }
            Ok(Shape::PerPoint(d.out_features))
        }
        LayerKind::Linear(d) => {
            check_dense(d)?;
            if x.is_per_point() {
                return Err(mismatch("linear layer needs a global input".into()));
            }
            Ok(Shape::Global(d.out_features))
        }
        LayerKind::BatchNorm(bn) => {
            let f = bn.features();
            if bn.beta.len() != f || bn.mean.len() != f || bn.var.len() != f {
                return Err(mismatch("batch norm parameter lengths differ".into()));
            }
            if bn.var.iter().any(|v| *v + bn.eps <= 0.0) || !(bn.eps >= 0.0) {
                return Err(mismatch("batch norm variance + eps must be positive".into()));
            }
            if f != x.features() {
                return Err(mismatch(format!("batch norm has {f} features, input has {}", x.features())));
            }
            Ok(x)
        }
        LayerKind::ReLU => Ok(x),
        LayerKind::GlobalMaxPool | LayerKind::GlobalAvgPool => match x {
            Shape::PerPoint(d) => Ok(Shape::Global(d)),
            Shape::Global(_) => Err(mismatch("pooling needs a per-point input".into())),
        },
        LayerKind::Repeat => match x {
            Shape::Global(d) => Ok(Shape::PerPoint(d)),
            Shape::PerPoint(_) => Err(mismatch("repeat needs a global input".into())),
        },
        LayerKind::Concatenate => {
            if inputs.iter().any(|s| s.is_per_point() != x.is_per_point()) {
                return Err(mismatch("cannot concatenate per-point and global features".into()));
            }
            let total = inputs.iter().map(Shape::features).sum();
            Ok(if x.is_per_point() {
                Shape::PerPoint(total)
            } else {
                Shape::Global(total)
            })
        }
        LayerKind::Output => {
            let expected = match task {
                Task::Classification { num_classes } => Shape::Global(num_classes),
                Task::Segmentation { num_parts } => Shape::PerPoint(num_parts),
            };
            if x != expected {
                return Err(mismatch(format!("output shape {x:?} does not match task {task:?}")));
            }
            Ok(x)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::Point3;

    fn identity3() -> Dense {
        Dense::new(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], vec![0.0; 3])
    }

    #[test]
    fn identity_pointwise_layer() {
        let m = Model::new(
            vec![
                LayerSpec::new(1, LayerKind::PointwiseLinear(identity3()), vec![0]),
                LayerSpec::new(2, LayerKind::Output, vec![1]),
            ],
            Task::Segmentation { num_parts: 3 },
            0,
        )
        .unwrap();
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-1.0, 0.5, 0.0)]).unwrap();
        assert_eq!(m.forward(&cloud).unwrap().data, cloud.coordinates());
    }

    #[test]
    fn max_pool_per_feature() {
        // Two points with two features: [[1, 5], [3, 2]].
        let d = Dense::new(3, 2, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], vec![0.0; 2]);
        let m = Model::new(
            vec![
                LayerSpec::new(1, LayerKind::PointwiseLinear(d), vec![0]),
                LayerSpec::new(2, LayerKind::GlobalMaxPool, vec![1]),
                LayerSpec::new(3, LayerKind::Output, vec![2]),
            ],
            Task::Classification { num_classes: 2 },
            0,
        )
        .unwrap();
        let cloud = PointCloud::new(vec![Point3::new(1.0, 5.0, 0.0), Point3::new(3.0, 2.0, 0.0)]).unwrap();
        assert_eq!(m.forward(&cloud).unwrap().data, vec![3.0, 5.0]);
    }

    #[test]
    fn rejects_dangling_reference() {
        let err = Model::new(
            vec![
                LayerSpec::new(1, LayerKind::PointwiseLinear(identity3()), vec![0]),
                LayerSpec::new(2, LayerKind::Concatenate, vec![1, 9]),
                LayerSpec::new(3, LayerKind::Output, vec![2]),
            ],
            Task::Segmentation { num_parts: 6 },
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { layer: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_cycles_and_bad_shapes() {
        let cyclic = Model::new(
            vec![
                LayerSpec::new(1, LayerKind::Concatenate, vec![0, 2]),
                LayerSpec::new(2, LayerKind::ReLU, vec![1]),
                LayerSpec::new(3, LayerKind::Output, vec![2]),
            ],
            Task::Segmentation { num_parts: 6 },
            0,
        );
        assert!(cyclic.is_err());

        let bad = Model::new(
            vec![
                LayerSpec::new(1, LayerKind::Linear(identity3()), vec![0]),
                LayerSpec::new(2, LayerKind::Output, vec![1]),
            ],
            Task::Classification { num_classes: 3 },
            0,
        );
        assert!(matches!(bad, Err(Error::ShapeMismatch { layer: 1, .. })));
    }

    #[test]
    fn declaration_order_does_not_matter() {
        let a = vec![
            LayerSpec::new(1, LayerKind::PointwiseLinear(identity3()), vec![0]),
            LayerSpec::new(2, LayerKind::ReLU, vec![1]),
            LayerSpec::new(3, LayerKind::GlobalAvgPool, vec![2]),
            LayerSpec::new(4, LayerKind::Output, vec![3]),
        ];
        let mut b = a.clone();
        b.reverse();
        let task = Task::Classification { num_classes: 3 };
        let ma = Model::new(a, task, 0).unwrap();
        let mb = Model::new(b, task, 0).unwrap();
        let cloud = PointCloud::new(vec![Point3::new(1.0, -2.0, 3.0), Point3::new(0.5, 0.5, -1.0)]).unwrap();
        assert_eq!(ma.forward(&cloud).unwrap(), mb.forward(&cloud).unwrap());
    }

    #[test]
    fn argmax_ties_pick_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
