use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use pointcert::transforms::{Compose, RotX, RotZ, Shear, TransformRegistry};
use pointcert::{parse_transform, Error, ParamBox, Point3, PointCloud, TransformExt};
use rand::Rng;

mod common;

const ALL: [&str; 9] = [
    "rotx", "roty", "rotz", "rotzx", "rotzyx", "shear", "twist", "taper", "twist*taper*rotz",
];

/// Reference formulas written out independently of the library.
fn reference(name: &str, p: [f64; 3], t: &[f64]) -> [f64; 3] {
    let [x, y, z] = p;
    match name {
        "rotx" => [x, y * t[0].cos() - z * t[0].sin(), y * t[0].sin() + z * t[0].cos()],
        "roty" => [x * t[0].cos() + z * t[0].sin(), y, -x * t[0].sin() + z * t[0].cos()],
        "rotz" => [x * t[0].cos() - y * t[0].sin(), x * t[0].sin() + y * t[0].cos(), z],
        "shear" => [x + t[0] * z, y + t[1] * z, z],
        "twist" => {
            let a = t[0] * z;
            [x * a.cos() - y * a.sin(), x * a.sin() + y * a.cos(), z]
        }
        "taper" => {
            let s = 0.5 * t[0] * t[0] * z + t[1] * z + 1.0;
            [s * x, s * y, z]
        }
        "rotzx" => reference("rotx", reference("rotz", p, &t[..1]), &t[1..]),
        "rotzyx" => {
            let q = reference("roty", reference("rotz", p, &t[..1]), &t[1..2]);
            reference("rotx", q, &t[2..])
        }
        "twist*taper*rotz" => {
            let q = reference("taper", reference("rotz", p, &t[..1]), &t[1..3]);
            reference("twist", q, &t[3..])
        }
        _ => unreachable!(),
    }
}

fn random_point(r: &mut impl Rng) -> [f64; 3] {
    std::array::from_fn(|_| r.gen_range(-1.0..1.0))
}

fn random_theta(r: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn matches_reference_formulas() {
    let mut r = common::rng(10);
    for name in ALL {
        let t = parse_transform(name).unwrap();
        for _ in 0..200 {
            let p = random_point(&mut r);
            let theta = random_theta(&mut r, t.param_count());
            let got = t.apply(Point3::from_array(p), &theta).unwrap().to_array();
            let want = reference(name, p, &theta);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-12, "{name}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn simple_values() {
    let rotz = parse_transform("rotz").unwrap();
    let q = rotz.apply(Point3::new(1.0, 0.0, 0.0), &[FRAC_PI_2]).unwrap();
    assert!((q.x).abs() < 1e-15 && (q.y - 1.0).abs() < 1e-15 && q.z == 0.0);
    let twist = parse_transform("twist").unwrap();
    assert_eq!(twist.apply(Point3::new(1.0, 0.0, 0.0), &[0.7]).unwrap(), Point3::new(1.0, 0.0, 0.0));
    let taper = parse_transform("taper").unwrap();
    assert_eq!(taper.apply(Point3::new(2.0, 3.0, 1.0), &[0.0, 0.0]).unwrap(), Point3::new(2.0, 3.0, 1.0));
    let shear = parse_transform("shear").unwrap();
    assert_eq!(shear.apply(Point3::new(0.0, 0.0, 2.0), &[1.0, 0.0]).unwrap(), Point3::new(2.0, 0.0, 2.0));
}

#[test]
fn identity_parameters() {
    let cloud = common::cloud(20, 3);
    for name in ALL {
        let t = parse_transform(name).unwrap();
        let moved = t.apply_cloud(&cloud, &vec![0.0; t.param_count()]).unwrap();
        assert_eq!(moved, cloud, "{name}");
    }
}

#[test]
fn arity_and_parameter_mismatch() {
    let arity: Vec<usize> = ALL.iter().map(|n| parse_transform(n).unwrap().param_count()).collect();
    assert_eq!(arity, vec![1, 1, 1, 2, 3, 2, 1, 2, 4]);
    let t = parse_transform("shear").unwrap();
    assert!(matches!(
        t.apply(Point3::new(0.0, 0.0, 0.0), &[1.0]),
        Err(Error::ParamCount { expected: 2, actual: 1 })
    ));
}

#[test]
fn rotations_are_isometries_and_z_invariance() {
    let mut r = common::rng(11);
    for _ in 0..500 {
        let p = Point3::from_array(random_point(&mut r));
        for name in ["rotz", "rotzx", "rotzyx"] {
            let t = parse_transform(name).unwrap();
            let theta: Vec<f64> = (0..t.param_count()).map(|_| r.gen_range(-7.0..7.0)).collect();
            assert!((t.apply(p, &theta).unwrap().norm() - p.norm()).abs() < 1e-9);
        }
        for name in ["shear", "twist", "taper", "rotz"] {
            let t = parse_transform(name).unwrap();
            let theta = random_theta(&mut r, t.param_count());
            assert_eq!(t.apply(p, &theta).unwrap().z, p.z, "{name}");
        }
    }
}

#[test]
fn composition_order() {
    // `rotx*rotz` applies rotz first.
    let parsed = parse_transform("rotx*rotz").unwrap();
    let built = Compose::new(vec![Arc::new(RotZ), Arc::new(RotX)]).unwrap();
    let builtin = parse_transform("rotzx").unwrap();
    let p = Point3::new(0.3, -0.2, 0.9);
    let theta = [0.4, -1.1];
    let a = parsed.apply(p, &theta).unwrap();
    assert_eq!(a, built.apply(p, &theta).unwrap());
    assert_eq!(a, builtin.apply(p, &theta).unwrap());
    let swapped = parse_transform("rotz*rotx").unwrap().apply(p, &[-1.1, 0.4]).unwrap();
    assert!((a.x - swapped.x).abs() > 1e-3);
}

#[test]
fn unknown_names_and_custom_registration() {
    assert!(matches!(parse_transform("spin"), Err(Error::UnknownTransform(_))));
    assert!(matches!(parse_transform("rotz**rotx"), Err(Error::UnknownTransform(_))));
    assert!(parse_transform("RotZ").is_ok());
    let mut reg = TransformRegistry::empty();
    reg.register("slant", || Arc::new(Shear));
    assert_eq!(reg.parse("slant").unwrap().param_count(), 2);
    assert!(reg.parse("rotz").is_err());
}

#[test]
fn closed_form_jacobians() {
    let shear = parse_transform("shear").unwrap();
    let p = Point3::new(0.4, -0.3, 0.8);
    assert_eq!(
        shear.jacobian_point(p, &[0.2, -0.5]).unwrap(),
        [[1.0, 0.0, 0.2], [0.0, 1.0, -0.5], [0.0, 0.0, 1.0]]
    );
    assert_eq!(shear.jacobian_params(p, &[0.2, -0.5]).unwrap(), [vec![0.8, 0.0], vec![0.0, 0.8], vec![0.0, 0.0]]);
    let taper = parse_transform("taper").unwrap();
    let j = taper.jacobian_params(p, &[0.0, 0.0]).unwrap();
    assert_eq!(j, [vec![0.0, 0.8 * 0.4], vec![0.0, 0.8 * -0.3], vec![0.0, 0.0]]);
    let rotz = parse_transform("rotz").unwrap();
    assert_eq!(rotz.jacobian_point(p, &[0.0]).unwrap(), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    // The z output never depends on the angle.
    assert_eq!(rotz.jacobian_params(p, &[0.7]).unwrap()[2], vec![0.0]);
}

fn fd_point(name: &str, p: [f64; 3], theta: &[f64], i: usize, h: f64) -> [f64; 3] {
    let (mut a, mut b) = (p, p);
    a[i] += h;
    b[i] -= h;
    let (fa, fb) = (reference(name, a, theta), reference(name, b, theta));
    std::array::from_fn(|c| (fa[c] - fb[c]) / (2.0 * h))
}

fn fd_param(name: &str, p: [f64; 3], theta: &[f64], a: usize, h: f64) -> [f64; 3] {
    let (mut ta, mut tb) = (theta.to_vec(), theta.to_vec());
    ta[a] += h;
    tb[a] -= h;
    let (fa, fb) = (reference(name, p, &ta), reference(name, p, &tb));
    std::array::from_fn(|c| (fa[c] - fb[c]) / (2.0 * h))
}

#[test]
fn jacobians_match_finite_differences() {
    let mut r = common::rng(12);
    let h = 1e-6;
    for case in 0..1000 {
        let name = ALL[case % ALL.len()];
        let t = parse_transform(name).unwrap();
        let p = random_point(&mut r);
        let theta = random_theta(&mut r, t.param_count());
        let jp = t.jacobian_point(Point3::from_array(p), &theta).unwrap();
        let jt = t.jacobian_params(Point3::from_array(p), &theta).unwrap();
        for i in 0..3 {
            let fd = fd_point(name, p, &theta, i, h);
            for c in 0..3 {
                assert!(close(jp[c][i], fd[c], 1e-5), "{name} dp[{c}][{i}] {} vs {}", jp[c][i], fd[c]);
            }
        }
        for a in 0..t.param_count() {
            let fd = fd_param(name, p, &theta, a, h);
            for c in 0..3 {
                assert!(close(jt[c][a], fd[c], 1e-5), "{name} dθ[{c}][{a}] {} vs {}", jt[c][a], fd[c]);
            }
        }
    }
}

#[test]
fn interval_hessians_contain_finite_differences() {
    let mut r = common::rng(13);
    let h = 1e-4;
    for name in ALL {
        let t = parse_transform(name).unwrap();
        let k = t.param_count();
        for _ in 0..20 {
            let p = random_point(&mut r);
            let centre = random_theta(&mut r, k);
            let radius: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..0.3)).collect();
            let lo: Vec<f64> = centre.iter().zip(&radius).map(|(c, w)| c - w).collect();
            let hi: Vec<f64> = centre.iter().zip(&radius).map(|(c, w)| c + w).collect();
            let b = ParamBox::new(lo.clone(), hi.clone()).unwrap();
            let hess = t.hessian_params_interval(Point3::from_array(p), &b).unwrap();
            for _ in 0..100 {
                let theta: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| r.gen_range(*l..=*u)).collect();
                for a in 0..k {
                    for bb in 0..k {
                        let shift = |da: f64, db: f64| {
                            let mut v = theta.clone();
                            v[a] += da;
                            v[bb] += db;
                            reference(name, p, &v)
                        };
                        let (pp, pm, mp, mm) = (shift(h, h), shift(h, -h), shift(-h, h), shift(-h, -h));
                        for c in 0..3 {
                            let fd = (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * h * h);
                            let iv = hess[c][a][bb];
                            assert!(
                                fd >= iv.lo() - 1e-5 && fd <= iv.hi() + 1e-5,
                                "{name} H[{c}][{a}][{bb}] = {fd} outside {iv:?}"
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn shear_hessian_is_zero() {
    let t = parse_transform("shear").unwrap();
    let b = ParamBox::symmetric(&[0.5, 0.5]).unwrap();
    let hess = t.hessian_params_interval(Point3::new(0.3, 0.2, 0.9), &b).unwrap();
    assert!(hess.iter().flatten().flatten().all(|iv| iv.lo() == 0.0 && iv.hi() == 0.0));
}

#[test]
fn clouds_reject_empty_and_non_finite() {
    assert!(matches!(PointCloud::new(vec![]), Err(Error::InvalidCloud(_))));
    assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
    assert!(ParamBox::new(vec![1.0], vec![0.0]).is_err());
}
