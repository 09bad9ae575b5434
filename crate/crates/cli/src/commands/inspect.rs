use std::fmt::Write as _;

use pointcert::network::{check_reference, load_model, read_reference, Shape, Task};
use serde::Serialize;

use super::emit;
use crate::args::InspectArgs;
use crate::Status;

#[derive(Serialize)]
struct LayerInfo {
    id: u32,
    kind: &'static str,
    inputs: Vec<u32>,
    per_point: bool,
    features: usize,
}

#[derive(Serialize)]
struct Summary {
    task: &'static str,
    outputs: usize,
    num_points: usize,
    parameters: usize,
    layers: Vec<LayerInfo>,
    reference_max_abs_diff: Option<f64>,
}

pub fn run(args: &InspectArgs) -> anyhow::Result<Status> {
    let model = load_model(&args.model)?;
    let (task, outputs) = match model.task() {
        Task::Classification { num_classes } => ("classification", num_classes),
        Task::Segmentation { num_parts } => ("segmentation", num_parts),
    };
    let layers: Vec<LayerInfo> = model
        .layers()
        .iter()
        .enumerate()
        .map(|(pos, l)| LayerInfo {
            id: l.id,
            kind: l.kind.name(),
            inputs: l.inputs.clone(),
            per_point: matches!(model.shape(pos), Shape::PerPoint(_)),
            features: model.shape(pos).features(),
        })
        .collect();
    let diff = match &args.reference {
        Some(path) => Some(check_reference(&model, &read_reference(path)?)?),
        None => None,
    };

    let mut text = String::new();
    writeln!(text, "{}: {task}, {outputs} outputs, {} parameters", args.model.display(), model.parameter_count())?;
    if model.num_points() > 0 {
        writeln!(text, "expects {} points", model.num_points())?;
    }
    for l in &layers {
        let shape = if l.per_point { format!("n x {}", l.features) } else { format!("{}", l.features) };
        writeln!(text, "  {:>3}  {:<18} {:<12} <- {:?}", l.id, l.kind, shape, l.inputs)?;
    }
    if let Some(d) = diff {
        writeln!(text, "reference: max abs diff {d:.3e} (tolerance {:.1e})", args.tolerance)?;
    }
    let summary = Summary {
        task,
        outputs,
        num_points: model.num_points(),
        parameters: model.parameter_count(),
        layers,
        reference_max_abs_diff: diff,
    };
    emit(args.format, &text, &summary)?;
    Ok(match diff {
        Some(d) if d > args.tolerance => Status::Fail,
        _ => Status::Pass,
    })
}
