//! The `.pcmodel.json` model format.
//!
//! ```json
//! {
//!   "version": 1,
//!   "task": {"type": "classification", "num_classes": 3},
//!   "num_points": 0,
//!   "layers": [
//!     {"id": 1, "kind": "pointwise_linear", "inputs": [0],
//!      "in_features": 3, "out_features": 8, "weight": [...], "bias": [...]},
//!     {"id": 2, "kind": "batch_norm", "gamma": [...], "beta": [...],
//!      "mean": [...], "var": [...], "eps": 1e-5},
//!     {"id": 3, "kind": "relu"},
//!     ...
//!     {"id": 9, "kind": "output"}
//!   ]
//! }
//! ```
//!
//! Weights are row-major `out × in` and stored as 32-bit decimals. `inputs`
//! defaults to the previously declared layer (the input cloud, id 0, for the
//! first one). A segmentation task is `{"type": "segmentation",
//! "num_parts": k}`. There is no dropout layer; exporters strip it.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchNorm, Dense, LayerKind, LayerSpec, Model, Task, INPUT_ID};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on the size of a model file.
pub const MAX_MODEL_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Serialize, Deserialize)]
struct RawModel {
    version: u32,
    task: RawTask,
    #[serde(default)]
    num_points: usize,
    layers: Vec<RawLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawTask {
    Classification { num_classes: usize },
    Segmentation { num_parts: usize },
}

#[derive(Serialize, Deserialize, Default)]
struct RawLayer {
    id: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inputs: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    var: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
}

fn widen(v: Vec<f32>) -> Vec<f64> {
    v.into_iter().map(f64::from).collect()
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|x| *x as f32).collect()
}

fn field<T>(layer: u32, name: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::ShapeMismatch {
        layer,
        message: format!("missing field `{name}`"),
    })
}

fn dense(raw: &mut RawLayer) -> Result<Dense> {
    let id = raw.id;
    Ok(Dense::new(
        field(id, "in_features", raw.in_features)?,
        field(id, "out_features", raw.out_features)?,
        widen(field(id, "weight", raw.weight.take())?),
        widen(field(id, "bias", raw.bias.take())?),
    ))
}

fn layer_kind(raw: &mut RawLayer) -> Result<LayerKind> {
    let id = raw.id;
    Ok(match raw.kind.as_str() {
        "pointwise_linear" => LayerKind::PointwiseLinear(dense(raw)?),
        "linear" => LayerKind::Linear(dense(raw)?),
        "batch_norm" => LayerKind::BatchNorm(BatchNorm {
            gamma: widen(field(id, "gamma", raw.gamma.take())?),
            beta: widen(field(id, "beta", raw.beta.take())?),
            mean: widen(field(id, "mean", raw.mean.take())?),
            var: widen(field(id, "var", raw.var.take())?),
            eps: field(id, "eps", raw.eps)?,
        }),
        "relu" => LayerKind::ReLU,
        "global_max_pool" => LayerKind::GlobalMaxPool,
        "global_avg_pool" => LayerKind::GlobalAvgPool,
        "repeat" => LayerKind::Repeat,
        "concatenate" => LayerKind::Concatenate,
        "output" => LayerKind::Output,
        other => {
            return Err(Error::UnsupportedLayer {
                layer: id,
                kind: other.to_string(),
            })
        }
    })
}

/// Parses and validates a model document.
pub fn model_from_json(text: &str) -> Result<Model> {
    // Check the version before the full schema so old files get a clear error.
    let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let version = probe
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse("missing integer field `version`".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            found: version.try_into().unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let raw: RawModel = serde_json::from_value(probe).map_err(|e| Error::Parse(e.to_string()))?;
    let task = match raw.task {
        RawTask::Classification { num_classes } => Task::Classification { num_classes },
        RawTask::Segmentation { num_parts } => Task::Segmentation { num_parts },
    };
    let mut previous = INPUT_ID;
    let mut layers = Vec::with_capacity(raw.layers.len());
    for mut l in raw.layers {
        let kind = layer_kind(&mut l)?;
        let inputs = l.inputs.take().unwrap_or_else(|| vec![previous]);
        previous = l.id;
        layers.push(LayerSpec::new(l.id, kind, inputs));
    }
    Model::new(layers, task, raw.num_points)
}

/// Serializes a model. Weights are written as 32-bit floats.
pub fn model_to_json(model: &Model) -> String {
    let task = match model.task() {
        Task::Classification { num_classes } => RawTask::Classification { num_classes },
        Task::Segmentation { num_parts } => RawTask::Segmentation { num_parts },
    };
    let layers = model
        .layers()
        .iter()
        .map(|l| {
            let mut raw = RawLayer {
                id: l.id,
                kind: l.kind.name().to_string(),
                inputs: Some(l.inputs.clone()),
                ..RawLayer::default()
            };
            match &l.kind {
                LayerKind::PointwiseLinear(d) | LayerKind::Linear(d) => {
                    raw.in_features = Some(d.in_features);
                    raw.out_features = Some(d.out_features);
                    raw.weight = Some(narrow(&d.weight));
                    raw.bias = Some(narrow(&d.bias));
                }
                LayerKind::BatchNorm(bn) => {
                    raw.gamma = Some(narrow(&bn.gamma));
                    raw.beta = Some(narrow(&bn.beta));
                    raw.mean = Some(narrow(&bn.mean));
                    raw.var = Some(narrow(&bn.var));
                    raw.eps = Some(bn.eps);
                }
                _ => {}
            }
            raw
        })
        .collect();
    let raw = RawModel {
        version: FORMAT_VERSION,
        task,
        num_points: model.num_points(),
        layers,
    };
    serde_json::to_string_pretty(&raw).expect("model serializes")
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    file.take(MAX_MODEL_BYTES + 1)
        .read_to_string(&mut text)
        .map_err(|e| Error::io(path, e))?;
    if text.len() as u64 > MAX_MODEL_BYTES {
        return Err(Error::TooLarge {
            path: path.to_path_buf(),
            limit: MAX_MODEL_BYTES,
        });
    }
    model_from_json(&text)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}
