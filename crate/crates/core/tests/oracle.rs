use std::f64::consts::PI;

use pointcert::oracle::{
    check_network_bounds, check_transform_bounds, empirical_attack, halton, parameter_samples, InputSampler,
    DEFAULT_SEED,
};
use pointcert::synth::{flip_cloud, flip_model};
use pointcert::taylor::taylor_bounds;
use pointcert::verifier::{certify_classification, linf_input, propagate, Outcome, Perturbation, VerifierConfig};
use pointcert::{parse_transform, ParamBox};

mod common;

const DEG: f64 = PI / 180.0;

#[test]
fn halton_points_are_well_spread() {
    // Every one of 10 bins receives about a tenth of 1000 samples.
    for base in [2, 3, 5] {
        let mut bins = [0usize; 10];
        for i in 1..=1000 {
            bins[(halton(i, base) * 10.0) as usize] += 1;
        }
        assert!(bins.iter().all(|b| (95..=105).contains(b)), "{bins:?}");
    }
}

#[test]
fn samples_include_corners_only_in_low_dimension() {
    let low = ParamBox::symmetric(&[0.1; 5]).unwrap();
    assert_eq!(parameter_samples(&low, 10, 1).len(), 32 + 10);
    let high = ParamBox::symmetric(&[0.1; 6]).unwrap();
    assert_eq!(parameter_samples(&high, 10, 1).len(), 10);
    assert_eq!(parameter_samples(&high, 10, 5), parameter_samples(&high, 10, 5));
}

#[test]
fn flip_model_is_caught_by_the_attack() {
    let model = flip_model((3.0 * DEG).sin());
    let cloud = flip_cloud();
    assert_eq!(model.predict(&cloud).unwrap(), vec![0]);
    let rotz = parse_transform("rotz").unwrap();
    let b = ParamBox::symmetric(&[5.0 * DEG]).unwrap();
    let sampler = InputSampler::Transform { transform: rotz.as_ref(), cloud: &cloud, params: &b };
    let attack = empirical_attack(&model, &sampler, 0, 1000, DEFAULT_SEED).unwrap();
    assert!(attack.flipped);
    assert!(attack.worst_margin < 0.0);
    // The verifier must not certify it either.
    let p = Perturbation::Transform { transform: rotz.as_ref(), params: &b, granularity: None };
    let v = certify_classification(&model, &cloud, p, 0, &VerifierConfig::default()).unwrap();
    assert_eq!(v.outcome, Outcome::NotCertified);
    // Inside the safe region both agree.
    let safe = ParamBox::symmetric(&[2.0 * DEG]).unwrap();
    let sampler = InputSampler::Transform { transform: rotz.as_ref(), cloud: &cloud, params: &safe };
    assert!(!empirical_attack(&model, &sampler, 0, 1000, DEFAULT_SEED).unwrap().flipped);
    let p = Perturbation::Transform { transform: rotz.as_ref(), params: &safe, granularity: None };
    assert!(certify_classification(&model, &cloud, p, 0, &VerifierConfig::default()).unwrap().certified());
}

#[test]
fn degenerate_box_attack_matches_classification() {
    let model = common::fixture_classifier();
    let rotz = parse_transform("rotz").unwrap();
    let b = ParamBox::degenerate(vec![0.0]).unwrap();
    for cloud in common::fixture_clouds() {
        let pred = model.predict(&cloud).unwrap()[0];
        let sampler = InputSampler::Transform { transform: rotz.as_ref(), cloud: &cloud, params: &b };
        for label in 0..3 {
            let attack = empirical_attack(&model, &sampler, label, 50, 1).unwrap();
            assert_eq!(attack.flipped, label != pred);
        }
    }
}

#[test]
fn identity_network_bounds_are_tight() {
    let model = flip_model(0.0);
    let cloud = flip_cloud();
    let prop = propagate(&model, &linf_input(&cloud, 0.0).unwrap(), &VerifierConfig::default()).unwrap();
    let sampler = InputSampler::Linf { cloud: &cloud, eps: 0.0 };
    let r = check_network_bounds(&prop, &sampler, 20, 1).unwrap();
    assert!(r.passed());
    assert_eq!(r.max_slack, 0.0);
}

#[test]
fn reports_are_reproducible() {
    let t = parse_transform("twist").unwrap();
    let cloud = common::cloud(16, 3);
    let b = ParamBox::symmetric(&[0.2]).unwrap();
    let bounds = taylor_bounds(t.as_ref(), &cloud, &b).unwrap();
    let a = check_transform_bounds(t.as_ref(), &cloud, &b, &bounds, 200, 4).unwrap();
    let c = check_transform_bounds(t.as_ref(), &cloud, &b, &bounds, 200, 4).unwrap();
    assert_eq!(a, c);
    assert_eq!(a.samples, 202);
    let other = taylor_bounds(t.as_ref(), &common::cloud(8, 3), &b).unwrap();
    assert!(check_transform_bounds(t.as_ref(), &cloud, &b, &other, 10, 4).is_err());
}
