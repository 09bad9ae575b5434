//! End-to-end tests of the `pointcert` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointcert"))
        .args(args)
        .env_remove("POINTCERT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout))
    })
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

fn certify(extra: &[&str]) -> Output {
    let model = fixture("classifier.pcmodel.json");
    let points = fixture("cloud0.xyz");
    let mut args = vec!["certify", "--model", path(&model), "--points", path(&points)];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn certify_small_rotation_passes_with_report() {
    let o = certify(&["--transform", "rotz", "--range=-1deg..1deg", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["version"], 1);
    assert_eq!(r["command"], "certify");
    assert_eq!(r["task"], "classification");
    assert_eq!(r["outcome"], "certified");
    let c = &r["classification"];
    assert_eq!(c["target"], c["predicted"]);
    assert!(c["margin"].as_f64().unwrap() > 0.0);
    let range = r["config"]["ranges"][0].as_array().unwrap();
    assert!((range[1].as_f64().unwrap() - 1f64.to_radians()).abs() < 1e-15);
    for cell in c["cells"].as_array().unwrap() {
        for m in cell["margins"].as_array().unwrap() {
            assert!(m["margin"].as_f64().unwrap() >= m["naive_margin"].as_f64().unwrap() - 1e-9);
        }
    }
    assert!(!r["layer_gaps"].as_array().unwrap().is_empty());
}

#[test]
fn certify_split_produces_one_cell_per_piece() {
    let o = certify(&["--transform", "rotz", "--range=-3deg..3deg", "--split", "2deg", "--format", "json"]);
    let r = stdout_json(&o);
    assert_eq!(r["classification"]["cells"].as_array().unwrap().len(), 3);
    assert_eq!(r["config"]["split"].as_array().unwrap().len(), 1);
}

#[test]
fn large_epsilon_is_not_certified() {
    let o = certify(&["--epsilon", "0.5"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("not certified"));
}

#[test]
fn zero_range_certifies_exactly_when_label_is_predicted() {
    let o = certify(&["--transform", "rotz", "--range", "0..0", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let predicted = stdout_json(&o)["classification"]["predicted"].as_u64().unwrap();
    for label in 0..3u64 {
        let l = label.to_string();
        let o = certify(&["--transform", "rotz", "--range", "0..0", "--label", &l, "--format", "json"]);
        let r = stdout_json(&o);
        let expect = if label == predicted { "certified" } else { "misclassified" };
        assert_eq!(r["outcome"], expect);
        assert_eq!(code(&o), if label == predicted { 0 } else { 1 });
    }
}

#[test]
fn certify_margins_are_deterministic() {
    let args = ["--transform", "twist*rotz", "--range=-2deg..2deg", "--range=-2deg..2deg", "--format", "json"];
    let a = stdout_json(&certify(&args));
    let b = stdout_json(&certify(&args));
    assert_eq!(a["classification"], b["classification"]);
    assert_eq!(a["layer_gaps"], b["layer_gaps"]);
}

#[test]
fn maxpool_strategies_and_attack() {
    for strategy in ["interval", "baseline", "improved"] {
        let o = certify(&["--epsilon", "0.001", "--maxpool", strategy, "--attack", "200", "--format", "json"]);
        let r = stdout_json(&o);
        assert_eq!(r["config"]["maxpool"], strategy);
        assert_eq!(r["attack"]["samples"], 200);
        assert_eq!(r["attack"]["flipped"], false);
    }
    let o = certify(&["--epsilon", "0.001", "--maxpool", "simplex"]);
    assert_eq!(code(&o), 2);
    let o = certify(&["--epsilon", "0.001", "--maxpool-group-size", "13"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = certify(&["--epsilon", "0.002", "--output", path(&out), "--format", "json"]);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(file["classification"], stdout_json(&o)["classification"]);
}

#[test]
fn segmentation_exit_code_reflects_every_point() {
    let model = fixture("segmenter.pcmodel.json");
    let points = fixture("seg_cloud.xyz");
    let labels = fixture("seg_cloud.labels");
    let base = ["certify", "--model", path(&model), "--points", path(&points), "--epsilon", "0.0001"];

    // The fixture labels mark one point wrongly.
    let mut args = base.to_vec();
    args.extend(["--labels", path(&labels), "--format", "json", "--attack", "100"]);
    let o = run(&args);
    assert_eq!(code(&o), 1);
    let r = stdout_json(&o);
    assert_eq!(r["task"], "segmentation");
    let seg = &r["segmentation"];
    assert_eq!(seg["correct"], 15);
    assert_eq!(seg["attack_flips"], 0);

    // Without labels every point is judged against its own prediction.
    let o = run(&base);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn argument_errors_exit_2() {
    let missing = fixture("nope.pcmodel.json");
    let points = fixture("cloud0.xyz");
    let o = run(&["certify", "--model", path(&missing), "--points", path(&points), "--epsilon", "0.01"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.pcmodel.json"));

    // Arity mismatch, unknown transform, missing mode, wrong label.
    for extra in [
        vec!["--transform", "twist*rotz", "--range=-1deg..1deg"],
        vec!["--transform", "spin", "--range=-1..1"],
        vec![],
        vec!["--epsilon", "0.01", "--label", "7"],
        vec!["--transform", "rotz", "--range=2..1"],
    ] {
        let o = certify(&extra);
        assert_eq!(code(&o), 2, "{extra:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["certify", "--help"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

fn relax_dump(points: &str, extra: &[&str]) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("p.xyz");
    std::fs::write(&cloud, points).unwrap();
    let mut args = vec!["relax", "--points", path(&cloud)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    stdout_json(&o)
}

#[test]
fn relax_reproduces_rotation_example() {
    let d = relax_dump("1 1 1\n", &["--transform", "rotz", "--range=-90deg..90deg"]);
    let rows = d["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let pi2 = std::f64::consts::PI.powi(2);
    // x = cos θ − sin θ: slope −1, remainder [−π²/4, π²/8] around 1.
    let expect = [(-1.0, 1.0 - pi2 / 4.0, 1.0 + pi2 / 8.0), (1.0, 1.0 - pi2 / 4.0, 1.0 + pi2 / 8.0), (0.0, 1.0, 1.0)];
    for (row, (w, bl, bu)) in rows.iter().zip(expect) {
        assert!((row["w_lower"][0].as_f64().unwrap() - w).abs() < 1e-12);
        assert!((row["w_upper"][0].as_f64().unwrap() - w).abs() < 1e-12);
        assert!((row["b_lower"].as_f64().unwrap() - bl).abs() < 1e-12, "{row}");
        assert!((row["b_upper"].as_f64().unwrap() - bu).abs() < 1e-12, "{row}");
    }
}

#[test]
fn relax_shear_is_exact() {
    let d = relax_dump("0.3 -0.2 0.5\n1 2 3\n", &["--transform", "shear", "--range=-0.1..0.2", "--range=0..0.3"]);
    for row in d["rows"].as_array().unwrap() {
        assert_eq!(row["b_lower"], row["b_upper"]);
        assert_eq!(row["w_lower"], row["w_upper"]);
    }
}

#[test]
fn relax_dump_passes_check_bounds_and_fault_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("bounds.json");
    let cloud = fixture("cloud1.xyz");
    let o = run(&[
        "relax",
        "--points",
        path(&cloud),
        "--transform",
        "taper*rotz",
        "--range=-0.2..0.2",
        "--range=0..0.3",
        "--range=-5deg..5deg",
        "--output",
        path(&dump),
    ]);
    assert_eq!(code(&o), 0);
    let o = run(&["selftest", "--check-bounds", path(&dump), "--samples", "200"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));
    let o = run(&["selftest", "--check-bounds", path(&dump), "--samples", "200", "--inject-fault", "transform-bounds"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn selftest_passes_and_is_reproducible() {
    let strip = |mut v: Value| {
        for s in v["suites"].as_array_mut().unwrap() {
            s.as_object_mut().unwrap().remove("detail");
        }
        v
    };
    let a = run(&["selftest", "--samples", "200", "--format", "json"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    let b = run(&["selftest", "--samples", "200", "--format", "json"]);
    let (a, b) = (stdout_json(&a), stdout_json(&b));
    assert_eq!(a["passed"], true);
    assert_eq!(a["violations"], 0);
    assert_eq!(strip(a), strip(b));
}

#[test]
fn every_injected_fault_fails_the_selftest() {
    for fault in ["transform-bounds", "network-bounds", "flip-certificate"] {
        let o = run(&["selftest", "--samples", "200", "--inject-fault", fault, "--format", "json"]);
        assert_eq!(code(&o), 1, "{fault}");
        let r = stdout_json(&o);
        assert_eq!(r["passed"], false);
        assert_eq!(r["fault"], fault);
        assert!(r["violations"].as_u64().unwrap() > 0);
    }
}

#[test]
fn selftest_on_fixture_model() {
    let model = fixture("classifier.pcmodel.json");
    let points = fixture("cloud2.xyz");
    let o = run(&["selftest", "--samples", "100", "--model", path(&model), "--points", path(&points)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn bench_checksums_are_deterministic() {
    let args = ["bench", "--sizes", "1,500", "--repeats", "1", "--format", "json"];
    let a = stdout_json(&run(&args));
    let b = stdout_json(&run(&args));
    let rows = a["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["points"], 1);
    for (x, y) in rows.iter().zip(b["rows"].as_array().unwrap()) {
        assert_eq!(x["checksum"], y["checksum"]);
    }
    assert_ne!(rows[0]["checksum"], rows[1]["checksum"]);
    assert!(a["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn inspect_compares_reference_logits() {
    let model = fixture("classifier.pcmodel.json");
    let reference = fixture("classifier.reference.json");
    let o = run(&["inspect", "--model", path(&model), "--reference", path(&reference)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["inspect", "--model", path(&model), "--format", "json"]);
    assert!(stdout_json(&o)["layers"].as_array().unwrap().len() > 5);
}

#[test]
fn inspect_detects_wrong_reference() {
    let dir = tempfile::tempdir().unwrap();
    let mut r: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("classifier.reference.json")).unwrap()).unwrap();
    for case in r["cases"].as_array_mut().unwrap() {
        let p = case["points"].as_str().unwrap();
        case["points"] = Value::from(path(&fixture(p)));
    }
    r["cases"][1]["logits"][0] = Value::from(r["cases"][1]["logits"][0].as_f64().unwrap() + 0.01);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r.to_string()).unwrap();
    let model = fixture("classifier.pcmodel.json");
    let o = run(&["inspect", "--model", path(&model), "--reference", path(&bad)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn thread_count_from_environment() {
    let model = fixture("classifier.pcmodel.json");
    let points = fixture("cloud0.xyz");
    let o = Command::new(env!("CARGO_BIN_EXE_pointcert"))
        .args(["certify", "--model", path(&model), "--points", path(&points), "--epsilon", "0.001", "--format", "json"])
        .env("POINTCERT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(stdout_json(&o)["config"]["threads"], 2);
    let o = Command::new(env!("CARGO_BIN_EXE_pointcert"))
        .args(["certify", "--model", path(&model), "--points", path(&points), "--epsilon", "0.001"])
        .env("POINTCERT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
