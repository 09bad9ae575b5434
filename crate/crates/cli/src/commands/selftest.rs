use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use pointcert::network::{load_model, read_points, Model, Task};
use pointcert::oracle::{
    check_network_bounds, check_transform_bounds, empirical_attack, segmentation_attack, InputSampler,
    SoundnessReport,
};
use pointcert::synth::{classifier, flip_cloud, flip_model, random_cloud, shape_cloud, ClassifierConfig, Solid};
use pointcert::taylor::{taylor_bounds, LinearBounds};
use pointcert::verifier::{
    certify_classification, certify_segmentation, linf_input, propagate, InputAbstraction, Outcome, Perturbation,
    VerifierConfig,
};
use pointcert::{parse_transform, ParamBox, PointCloud, Transform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{emit, write_json};
use crate::args::{Fault, SelftestArgs};
use crate::report::{RelaxDump, SelftestReport, SuiteResult, REPORT_VERSION};
use crate::Status;

const DEG: f64 = PI / 180.0;

const TRANSFORMS: [&str; 9] = [
    "rotz",
    "rotzx",
    "rotzyx",
    "shear",
    "twist",
    "taper",
    "twist*rotz",
    "taper*rotz",
    "twist*taper*rotz",
];

/// Amount by which injected faults move a bound.
const FAULT_SHIFT: f64 = 0.1;

fn empty_report() -> SoundnessReport {
    SoundnessReport {
        samples: 0,
        checks: 0,
        violations: 0,
        worst: 0.0,
        max_slack: 0.0,
    }
}

fn suite(name: &str, report: SoundnessReport, detail: String) -> SuiteResult {
    SuiteResult {
        name: name.to_string(),
        passed: report.passed(),
        report,
        detail,
    }
}

fn corrupt_upper(bounds: &mut LinearBounds) {
    bounds.biases_mut().1.iter_mut().for_each(|v| *v -= FAULT_SHIFT);
}

fn transform_suite(args: &SelftestArgs) -> anyhow::Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut total = empty_report();
    let mut worst_case = String::new();
    for (i, name) in TRANSFORMS.iter().enumerate() {
        let t = parse_transform(name)?;
        for q in 0..3u64 {
            let cloud = random_cloud(64, args.seed.wrapping_add(10 * i as u64 + q));
            let lo: Vec<f64> = (0..t.param_count()).map(|_| rng.gen_range(-0.5..0.3)).collect();
            let hi = lo.iter().map(|l| l + rng.gen_range(0.0..0.4)).collect();
            let params = ParamBox::new(lo, hi)?;
            let mut bounds = taylor_bounds(t.as_ref(), &cloud, &params)?;
            if args.inject_fault == Some(Fault::TransformBounds) {
                corrupt_upper(&mut bounds);
            }
            let r = check_transform_bounds(t.as_ref(), &cloud, &params, &bounds, args.samples, args.seed)?;
            if r.worst > total.worst {
                worst_case = format!("{name} over {:?}..{:?}: exceeded by {:.3e}", params.lo(), params.hi(), r.worst);
            }
            total = total.merge(r);
        }
    }
    Ok(suite("transform-bounds", total, worst_case))
}

/// The model and cloud for the network suites.
fn network_subject(args: &SelftestArgs) -> anyhow::Result<(Model, PointCloud)> {
    match (&args.model, &args.points) {
        (Some(m), Some(p)) => {
            let model = load_model(m)?;
            let cloud = read_points(p)?;
            model.check_cloud(&cloud)?;
            Ok((model, cloud))
        }
        _ => Ok((
            classifier(&ClassifierConfig::scaled(3, 8), args.seed),
            shape_cloud(Solid::Sphere, 16, args.seed),
        )),
    }
}

fn network_suite(args: &SelftestArgs, model: &Model, cloud: &PointCloud) -> anyhow::Result<SuiteResult> {
    let rotz = parse_transform("rotz")?;
    let params = ParamBox::symmetric(&[3.0 * DEG])?;
    let config = VerifierConfig::default();
    let mut total = empty_report();
    let mut worst_case = String::new();
    let queries: [(&str, InputSampler<'_>); 2] = [
        (
            "rotz +-3deg",
            InputSampler::Transform {
                transform: rotz.as_ref(),
                cloud,
                params: &params,
            },
        ),
        ("linf 0.01", InputSampler::Linf { cloud, eps: 0.01 }),
    ];
    for (label, sampler) in queries {
        let input = match sampler {
            InputSampler::Transform { transform, params, .. } => {
                let mut bounds = taylor_bounds(transform, cloud, params)?;
                if args.inject_fault == Some(Fault::NetworkBounds) {
                    let (lo, hi) = bounds.biases_mut();
                    lo.iter_mut().chain(hi.iter_mut()).for_each(|v| *v += FAULT_SHIFT);
                }
                InputAbstraction::from_bounds(bounds)
            }
            InputSampler::Linf { eps, .. } => linf_input(cloud, eps)?,
        };
        let prop = propagate(model, &input, &config)?;
        let r = check_network_bounds(&prop, &sampler, args.samples, args.seed)?;
        if r.worst > total.worst {
            worst_case = format!("{label}: a neuron exceeded its bounds by {:.3e}", r.worst);
        }
        total = total.merge(r);
    }
    Ok(suite("network-bounds", total, worst_case))
}

/// Certifies several queries and attacks every certified one; a successful
/// attack on a certificate is a violation.
fn certificate_suite(args: &SelftestArgs, model: &Model, cloud: &PointCloud) -> anyhow::Result<SuiteResult> {
    let rotz = parse_transform("rotz")?;
    let config = VerifierConfig::default();
    let split = [2.0 * DEG];
    let boxes = [ParamBox::symmetric(&[1.0 * DEG])?, ParamBox::symmetric(&[3.0 * DEG])?];
    let mut total = empty_report();
    let mut worst_case = String::new();

    let mut record = |label: String, checked: usize, flipped: usize, samples: usize, worst: f64| {
        total.samples += samples;
        total.checks += checked;
        total.violations += flipped;
        if flipped > 0 && worst >= total.worst {
            total.worst = worst;
            worst_case = label;
        }
    };

    let mut queries: Vec<(String, Perturbation<'_>, InputSampler<'_>)> = boxes
        .iter()
        .map(|b| {
            (
                format!("rotz {:.1}deg", b.hi()[0] / DEG),
                Perturbation::Transform {
                    transform: rotz.as_ref(),
                    params: b,
                    granularity: Some(&split),
                },
                InputSampler::Transform {
                    transform: rotz.as_ref(),
                    cloud,
                    params: b,
                },
            )
        })
        .collect();
    queries.push((
        "linf 0.01".into(),
        Perturbation::Linf { eps: 0.01 },
        InputSampler::Linf { cloud, eps: 0.01 },
    ));

    for (label, perturbation, sampler) in &queries {
        match model.task() {
            Task::Classification { .. } => {
                let target = model.predict(cloud)?[0];
                let v = certify_classification(model, cloud, *perturbation, target, &config)?;
                if v.certified() {
                    let a = empirical_attack(model, sampler, target, args.samples, args.seed)?;
                    let what = format!("{label}: certified but sample {} has margin {:.3e}", a.worst_sample, a.worst_margin);
                    record(what, 1, a.flipped as usize, a.samples, -a.worst_margin);
                }
            }
            Task::Segmentation { .. } => {
                let labels = model.predict(cloud)?;
                let v = certify_segmentation(model, cloud, &labels, *perturbation, &config)?;
                let targets: Vec<(usize, usize)> = v
                    .points
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.outcome == Outcome::Certified)
                    .map(|(i, p)| (i, p.label))
                    .collect();
                let flips = segmentation_attack(model, sampler, &targets, args.samples, args.seed)?;
                let flipped = flips.iter().filter(|f| **f).count();
                record(format!("{label}: {flipped} certified point(s) flipped"), targets.len(), flipped, args.samples, 1.0);
            }
        }
    }

    // Known counterexample: the attack must find it, and a certificate for
    // it must be caught.
    let toy = flip_model((3.0 * DEG).sin());
    let toy_cloud = flip_cloud();
    let toy_box = ParamBox::symmetric(&[5.0 * DEG])?;
    let p = Perturbation::Transform {
        transform: rotz.as_ref(),
        params: &toy_box,
        granularity: None,
    };
    let mut certified = certify_classification(&toy, &toy_cloud, p, 0, &config)?.certified();
    if args.inject_fault == Some(Fault::FlipCertificate) {
        certified = true;
    }
    let sampler = InputSampler::Transform {
        transform: rotz.as_ref(),
        cloud: &toy_cloud,
        params: &toy_box,
    };
    let a = empirical_attack(&toy, &sampler, 0, args.samples, args.seed)?;
    anyhow::ensure!(a.flipped, "the attack missed the known counterexample of the flip model");
    if certified {
        record(
            format!("flip model certified but sample {} has margin {:.3e}", a.worst_sample, a.worst_margin),
            1,
            1,
            a.samples,
            -a.worst_margin,
        );
    }
    Ok(suite("certificates", total, worst_case))
}

fn check_bounds_suite(args: &SelftestArgs, path: &Path) -> anyhow::Result<SuiteResult> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let dump: RelaxDump = serde_json::from_str(&text).with_context(|| format!("{}: not a bound dump", path.display()))?;
    anyhow::ensure!(dump.version == REPORT_VERSION, "{}: unsupported dump version {}", path.display(), dump.version);
    let transform: std::sync::Arc<dyn Transform> = parse_transform(&dump.transform)?;
    let params = ParamBox::new(dump.lo.clone(), dump.hi.clone())?;
    let cloud = PointCloud::new(dump.points.iter().map(|p| pointcert::Point3::from_array(*p)).collect())?;
    anyhow::ensure!(dump.rows.len() == cloud.len() * 3, "{}: expected {} rows", path.display(), cloud.len() * 3);
    let (mut w_lo, mut b_lo, mut w_hi, mut b_hi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, row) in dump.rows.iter().enumerate() {
        anyhow::ensure!(row.point * 3 + row.coord == i, "{}: rows out of order at {i}", path.display());
        w_lo.extend_from_slice(&row.w_lower);
        b_lo.push(row.b_lower);
        w_hi.extend_from_slice(&row.w_upper);
        b_hi.push(row.b_upper);
    }
    let mut bounds = LinearBounds::from_parts(params.clone(), w_lo, b_lo, w_hi, b_hi)?;
    if args.inject_fault == Some(Fault::TransformBounds) {
        corrupt_upper(&mut bounds);
    }
    let r = check_transform_bounds(transform.as_ref(), &cloud, &params, &bounds, args.samples, args.seed)?;
    let detail = format!("{} on {} points", dump.transform, cloud.len());
    Ok(suite("check-bounds", r, detail))
}

pub fn run(args: &SelftestArgs) -> anyhow::Result<Status> {
    anyhow::ensure!(args.samples > 0, "--samples must be positive");
    let suites = match &args.check_bounds {
        Some(path) => vec![check_bounds_suite(args, path)?],
        None => {
            let (model, cloud) = network_subject(args)?;
            vec![
                transform_suite(args)?,
                network_suite(args, &model, &cloud)?,
                certificate_suite(args, &model, &cloud)?,
            ]
        }
    };
    let violations = suites.iter().map(|s| s.report.violations).sum();
    let passed = suites.iter().all(|s| s.passed);

    let mut text = String::new();
    for s in &suites {
        let r = &s.report;
        writeln!(
            text,
            "{} {}: {} samples, {} checks, {} violations, max slack {:.3e}",
            if s.passed { "PASS" } else { "FAIL" },
            s.name,
            r.samples,
            r.checks,
            r.violations,
            r.max_slack
        )?;
        if !s.passed {
            writeln!(text, "     worst: {} (excess {:.3e})", s.detail, r.worst)?;
        }
    }
    let report = SelftestReport {
        version: REPORT_VERSION,
        command: "selftest",
        seed: args.seed,
        samples: args.samples,
        fault: args
            .inject_fault
            .and_then(|f| f.to_possible_value())
            .map(|v| v.get_name().to_string()),
        suites,
        violations,
        passed,
    };
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    emit(args.format, &text, &report)?;
    Ok(if passed { Status::Pass } else { Status::Fail })
}
