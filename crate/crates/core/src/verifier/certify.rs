//! Certification verdicts for classification and part segmentation.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use super::{layer_gap_report, linf_input, propagate, InputAbstraction, LayerGap, Propagation, VerifierConfig};
use crate::error::{Error, Result};
use crate::network::{argmax, Model, Task};
use crate::taylor::split;
use crate::transforms::{ParamBox, PointCloud, Transform};

/// What the input is allowed to undergo.
#[derive(Debug, Clone, Copy)]
pub enum Perturbation<'a> {
    /// `transform(P, θ)` for every `θ` in `params`, optionally split into
    /// cells of at most `granularity` width per parameter.
    Transform {
        transform: &'a dyn Transform,
        params: &'a ParamBox,
        granularity: Option<&'a [f64]>,
    },
    /// Every coordinate moved by at most `eps`.
    Linf { eps: f64 },
}

impl Perturbation<'_> {
    /// Cells to certify; `None` stands for the single ℓ∞ cell.
    fn cells(&self) -> Result<Vec<Option<ParamBox>>> {
        match *self {
            Perturbation::Transform {
                params, granularity, ..
            } => Ok(match granularity {
                Some(g) => split(params, g)?.cells().iter().cloned().map(Some).collect(),
                None => vec![Some(params.clone())],
            }),
            Perturbation::Linf { .. } => Ok(vec![None]),
        }
    }

    fn abstraction(&self, cloud: &PointCloud, cell: Option<&ParamBox>) -> Result<InputAbstraction> {
        match (*self, cell) {
            (Perturbation::Transform { transform, .. }, Some(cell)) => {
                InputAbstraction::from_transform(transform, cloud, cell)
            }
            (Perturbation::Linf { eps }, _) => linf_input(cloud, eps),
            _ => unreachable!("transform cells always carry a box"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Certified,
    NotCertified,
    Misclassified,
}

/// Result on one split cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    /// `None` for ℓ∞ perturbations.
    pub params: Option<ParamBox>,
    /// Per other class `j`: lower bound of `logit_target − logit_j` from the
    /// joint difference expression.
    pub margins: Vec<(usize, f64)>,
    /// Per other class: `lo(logit_target) − hi(logit_j)`.
    pub naive_margins: Vec<(usize, f64)>,
    /// Smallest margin.
    pub margin: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub target: usize,
    pub predicted: usize,
    /// Smallest margin over all cells; absent for misclassified inputs.
    pub margin: Option<f64>,
    pub cells: Vec<CellResult>,
    /// Mean bound width per layer, averaged over cells.
    pub layer_gaps: Vec<LayerGap>,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn certified(&self) -> bool {
        self.outcome == Outcome::Certified
    }
}

fn mean_gaps(reports: Vec<Vec<LayerGap>>) -> Vec<LayerGap> {
    let count = reports.len().max(1) as f64;
    let mut iter = reports.into_iter();
    let Some(mut acc) = iter.next() else {
        return Vec::new();
    };
    for r in iter {
        for (a, b) in acc.iter_mut().zip(r) {
            a.mean_gap += b.mean_gap;
        }
    }
    for a in &mut acc {
        a.mean_gap /= count;
    }
    acc
}

/// Margins of `target` against every other output of one logit row.
fn margins(prop: &Propagation<'_>, row: usize, width: usize, target: usize) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
    let pos = prop.model().output_position();
    let (lo, hi) = prop.bounds(pos);
    let t = row * width + target;
    (0..width)
        .filter(|&j| j != target)
        .map(|j| {
            let o = row * width + j;
            ((j, prop.difference_lower(pos, t, o)), (j, lo[t] - hi[o]))
        })
        .unzip()
}

fn min_margin(m: &[(usize, f64)]) -> f64 {
    m.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min)
}

/// Certifies that `model` keeps classifying `cloud` as `target` under the
/// perturbation. Only correctly classified inputs are certified.
pub fn certify_classification(
    model: &Model,
    cloud: &PointCloud,
    perturbation: Perturbation<'_>,
    target: usize,
    config: &VerifierConfig,
) -> Result<Verdict> {
    let start = Instant::now();
    let Task::Classification { num_classes } = model.task() else {
        return Err(Error::InvalidArgument("classification certificate requested for a segmentation model".into()));
    };
    if target >= num_classes {
        return Err(Error::InvalidArgument(format!("label {target} out of range for {num_classes} classes")));
    }
    let predicted = argmax(&model.forward(cloud)?.data);
    if predicted != target {
        return Ok(Verdict {
            outcome: Outcome::Misclassified,
            target,
            predicted,
            margin: None,
            cells: Vec::new(),
            layer_gaps: Vec::new(),
            elapsed: start.elapsed(),
        });
    }

    let results = perturbation
        .cells()?
        .into_par_iter()
        .map(|cell| {
            let input = perturbation.abstraction(cloud, cell.as_ref())?;
            let prop = propagate(model, &input, config)?;
            let (margins, naive_margins) = margins(&prop, 0, num_classes, target);
            let margin = min_margin(&margins);
            Ok((
                CellResult {
                    params: cell,
                    margins,
                    naive_margins,
                    margin,
                    certified: margin > 0.0,
                },
                layer_gap_report(&prop),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (cells, gaps): (Vec<CellResult>, Vec<Vec<LayerGap>>) = results.into_iter().unzip();
    let margin = cells.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let certified = cells.iter().all(|c| c.certified);
    Ok(Verdict {
        outcome: if certified {
            Outcome::Certified
        } else {
            Outcome::NotCertified
        },
        target,
        predicted,
        margin: Some(margin),
        cells,
        layer_gaps: mean_gaps(gaps),
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PointVerdict {
    pub label: usize,
    pub predicted: usize,
    pub outcome: Outcome,
    /// Smallest margin over cells and other parts; absent if misclassified.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentationVerdict {
    pub points: Vec<PointVerdict>,
    pub correct: usize,
    pub certified: usize,
    /// Certified points over correctly classified points.
    pub certified_ratio: f64,
    pub cells: usize,
    pub layer_gaps: Vec<LayerGap>,
    pub elapsed: Duration,
}

/// Certifies each correctly labelled point's part prediction.
pub fn certify_segmentation(
    model: &Model,
    cloud: &PointCloud,
    labels: &[usize],
    perturbation: Perturbation<'_>,
    config: &VerifierConfig,
) -> Result<SegmentationVerdict> {
    let start = Instant::now();
    let Task::Segmentation { num_parts } = model.task() else {
        return Err(Error::InvalidArgument("segmentation certificate requested for a classification model".into()));
    };
    if labels.len() != cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} points",
            labels.len(),
            cloud.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= num_parts) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {num_parts} parts")));
    }
    let predicted = model.predict(cloud)?;
    let correct: Vec<usize> = (0..cloud.len()).filter(|&p| predicted[p] == labels[p]).collect();

    let cells = perturbation.cells()?;
    let per_cell = cells
        .par_iter()
        .map(|cell| {
            let input = perturbation.abstraction(cloud, cell.as_ref())?;
            let prop = propagate(model, &input, config)?;
            let worst: Vec<f64> = correct
                .par_iter()
                .map(|&p| min_margin(&margins(&prop, p, num_parts, labels[p]).0))
                .collect();
            Ok((worst, layer_gap_report(&prop)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut worst = vec![f64::INFINITY; correct.len()];
    let mut gaps = Vec::with_capacity(per_cell.len());
    for (cell_margins, g) in per_cell {
        for (w, m) in worst.iter_mut().zip(cell_margins) {
            *w = w.min(m);
        }
        gaps.push(g);
    }

    let mut points: Vec<PointVerdict> = (0..cloud.len())
        .map(|p| PointVerdict {
            label: labels[p],
            predicted: predicted[p],
            outcome: Outcome::Misclassified,
            margin: None,
        })
        .collect();
    for (&p, &m) in correct.iter().zip(&worst) {
        points[p].margin = Some(m);
        points[p].outcome = if m > 0.0 {
            Outcome::Certified
        } else {
            Outcome::NotCertified
        };
    }
    let certified = points.iter().filter(|v| v.outcome == Outcome::Certified).count();
    Ok(SegmentationVerdict {
        certified_ratio: if correct.is_empty() {
            0.0
        } else {
            certified as f64 / correct.len() as f64
        },
        correct: correct.len(),
        certified,
        cells: cells.len(),
        points,
        layer_gaps: mean_gaps(gaps),
        elapsed: start.elapsed(),
    })
}
