use super::{Dense, LayerKind, LayerSpec, Model};
use crate::error::{Error, Result};

/// Merges every batch norm into the linear layer feeding it.
///
/// The folded linear layer keeps its own id; consumers of the batch norm are
/// rewired to it. Fails if a batch norm follows anything but a linear layer,
/// or if that linear layer has other consumers.
pub fn fold_batchnorm(model: &Model) -> Result<Model> {
    let mut layers: Vec<LayerSpec> = model.layers().to_vec();
    let mut renames: Vec<(u32, u32)> = Vec::new();

    let bn_positions: Vec<usize> = (0..layers.len())
        .filter(|&i| matches!(layers[i].kind, LayerKind::BatchNorm(_)))
        .collect();
    for &pos in &bn_positions {
        let bn_id = layers[pos].id;
        let pred_id = layers[pos].inputs[0];
        let Some(pred_pos) = layers.iter().position(|l| l.id == pred_id) else {
            return Err(Error::NotFoldable { layer: bn_id });
        };
        let consumers = layers.iter().filter(|l| l.inputs.contains(&pred_id)).count();
        if consumers != 1 {
            return Err(Error::NotFoldable { layer: bn_id });
        }
        let LayerKind::BatchNorm(bn) = layers[pos].kind.clone() else {
            unreachable!()
        };
        let affine = bn.affine();
        let (LayerKind::PointwiseLinear(d) | LayerKind::Linear(d)) = &mut layers[pred_pos].kind else {
            return Err(Error::NotFoldable { layer: bn_id });
        };
        fold_into(d, &bn, &affine);
        renames.push((bn_id, pred_id));
    }

    layers.retain(|l| !matches!(l.kind, LayerKind::BatchNorm(_)));
    for l in &mut layers {
        for input in &mut l.inputs {
            if let Some((_, to)) = renames.iter().find(|(from, _)| from == input) {
                *input = *to;
            }
        }
    }
    Model::new(layers, model.task(), model.num_points())
}

fn fold_into(d: &mut Dense, bn: &super::BatchNorm, affine: &[(f64, f64)]) {
    for (o, &(scale, _)) in affine.iter().enumerate() {
        for w in &mut d.weight[o * d.in_features..(o + 1) * d.in_features] {
            *w *= scale;
        }
        d.bias[o] = scale * (d.bias[o] - bn.mean[o]) + bn.beta[o];
    }
}
