use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Context;
use pointcert::maxpool::strategy;
use pointcert::network::{load_model, read_labels, read_points, Task};
use pointcert::oracle::{empirical_attack, segmentation_attack, InputSampler};
use pointcert::verifier::{certify_classification, certify_segmentation, Outcome, Perturbation, VerifierConfig};

use super::{emit, transform_box, write_json};
use crate::args::CertifyArgs;
use crate::report::{
    CellReport, CertifyReport, ClassificationResult, ConfigEcho, SegmentationResult, Timings, REPORT_VERSION,
};
use crate::Status;

pub fn run(args: &CertifyArgs) -> anyhow::Result<Status> {
    let start = Instant::now();
    let model = load_model(&args.model)?;
    let cloud = read_points(&args.points)?;
    model.check_cloud(&cloud)?;
    let config = VerifierConfig::new(strategy(&args.maxpool)?, args.maxpool_group_size);

    let transform = match &args.transform.transform {
        Some(_) => Some(transform_box(&args.transform)?),
        None => None,
    };
    let split = match (&transform, args.split.len()) {
        (_, 0) => None,
        (Some((t, _)), 1) => Some(vec![args.split[0]; t.param_count()]),
        (Some((t, _)), n) => {
            anyhow::ensure!(n == t.param_count(), "expected 1 or {} --split values, got {n}", t.param_count());
            Some(args.split.clone())
        }
        (None, _) => unreachable!("--split requires --transform"),
    };
    let perturbation = match &transform {
        Some((t, params)) => Perturbation::Transform {
            transform: t.as_ref(),
            params,
            granularity: split.as_deref(),
        },
        None => Perturbation::Linf {
            eps: args.epsilon.context("--epsilon or --transform is required")?,
        },
    };
    let sampler = match (&transform, perturbation) {
        (Some((t, params)), _) => InputSampler::Transform {
            transform: t.as_ref(),
            cloud: &cloud,
            params,
        },
        (None, Perturbation::Linf { eps }) => InputSampler::Linf { cloud: &cloud, eps },
        (None, _) => unreachable!(),
    };
    let load_seconds = start.elapsed().as_secs_f64();

    let certify_start = Instant::now();
    let mut summary = String::new();
    let query = match &transform {
        Some((t, p)) => {
            let ranges: Vec<String> = p.lo().iter().zip(p.hi()).map(|(l, h)| format!("[{l:.6}, {h:.6}]")).collect();
            format!("{} over {}", t.name(), ranges.join(" x "))
        }
        None => format!("linf eps {}", args.epsilon.unwrap_or_default()),
    };
    writeln!(summary, "model:   {}", args.model.display())?;
    writeln!(summary, "points:  {} ({} points)", args.points.display(), cloud.len())?;
    writeln!(summary, "query:   {query}, maxpool {} (group {})", args.maxpool, args.maxpool_group_size)?;

    let (task, outcome, classification, segmentation, layer_gaps, attack, status) = match model.task() {
        Task::Classification { num_classes } => {
            let target = match args.label {
                Some(l) => l,
                None => model.predict(&cloud)?[0],
            };
            anyhow::ensure!(target < num_classes, "--label {target} out of range for {num_classes} classes");
            let v = certify_classification(&model, &cloud, perturbation, target, &config)?;
            let attack = match args.attack {
                Some(n) if v.outcome != Outcome::Misclassified => {
                    Some(empirical_attack(&model, &sampler, target, n, args.seed)?)
                }
                _ => None,
            };
            writeln!(
                summary,
                "verdict: {} (target {}, predicted {}, margin {}, {} cell(s))",
                outcome_name(v.outcome),
                v.target,
                v.predicted,
                v.margin.map_or("n/a".to_string(), |m| format!("{m:.6}")),
                v.cells.len()
            )?;
            if let Some(a) = &attack {
                writeln!(summary, "attack:  {} samples, flipped {}, worst margin {:.6}", a.samples, a.flipped, a.worst_margin)?;
            }
            let status = if v.certified() { Status::Pass } else { Status::Fail };
            let result = ClassificationResult {
                target: v.target,
                predicted: v.predicted,
                margin: v.margin,
                cells: v.cells.iter().map(CellReport::from).collect(),
            };
            ("classification", v.outcome, Some(result), None, v.layer_gaps, attack, status)
        }
        Task::Segmentation { .. } => {
            let labels = match &args.labels {
                Some(path) => read_labels(path)?,
                None => model.predict(&cloud)?,
            };
            let v = certify_segmentation(&model, &cloud, &labels, perturbation, &config)?;
            let flips = match args.attack {
                Some(n) => {
                    let targets: Vec<(usize, usize)> = v
                        .points
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p.outcome == Outcome::Certified)
                        .map(|(i, p)| (i, p.label))
                        .collect();
                    let flips = segmentation_attack(&model, &sampler, &targets, n, args.seed)?;
                    Some(flips.iter().filter(|f| **f).count())
                }
                None => None,
            };
            let all = v.certified == cloud.len();
            writeln!(
                summary,
                "verdict: {}/{} correct points certified ({:.1}%), {} misclassified, {} cell(s)",
                v.certified,
                v.correct,
                100.0 * v.certified_ratio,
                cloud.len() - v.correct,
                v.cells
            )?;
            if let Some(f) = flips {
                writeln!(summary, "attack:  {f} certified point(s) flipped")?;
            }
            let outcome = if all {
                Outcome::Certified
            } else {
                Outcome::NotCertified
            };
            let result = SegmentationResult {
                correct: v.correct,
                certified: v.certified,
                certified_ratio: v.certified_ratio,
                cells: v.cells,
                points: v.points,
                attack_flips: flips,
            };
            let status = if all { Status::Pass } else { Status::Fail };
            ("segmentation", outcome, None, Some(result), v.layer_gaps, None, status)
        }
    };
    let certify_seconds = certify_start.elapsed().as_secs_f64();
    writeln!(summary, "time:    {certify_seconds:.3} s")?;

    let report = CertifyReport {
        version: REPORT_VERSION,
        command: "certify",
        config: ConfigEcho {
            model: args.model.clone(),
            points: args.points.clone(),
            labels: args.labels.clone(),
            transform: transform.as_ref().map(|(t, _)| t.name()),
            ranges: transform
                .as_ref()
                .map(|(_, p)| p.lo().iter().zip(p.hi()).map(|(l, h)| [*l, *h]).collect())
                .unwrap_or_default(),
            split: split.unwrap_or_default(),
            epsilon: args.epsilon,
            maxpool: args.maxpool.clone(),
            maxpool_group_size: args.maxpool_group_size,
            threads: rayon::current_num_threads(),
            seed: args.seed,
        },
        task,
        outcome,
        classification,
        segmentation,
        layer_gaps,
        attack,
        timings: Timings {
            load_seconds,
            certify_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    emit(args.format, &summary, &report)?;
    Ok(status)
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Certified => "certified",
        Outcome::NotCertified => "not certified",
        Outcome::Misclassified => "misclassified",
    }
}
