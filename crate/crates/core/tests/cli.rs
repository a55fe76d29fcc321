use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lddmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lddmm")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(fixture: &str, dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", fixture, "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&lddmm(&args));
}

fn register(dir: &Path, out: &Path, extra: &[&str]) -> Output {
    let source = dir.join("source.raw");
    let target = dir.join("target.raw");
    let mut args = vec![
        "register",
        "--source",
        source.to_str().unwrap(),
        "--target",
        target.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    lddmm(&args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn blob_registration_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (fix, out) = (tmp.path().join("fix"), tmp.path().join("run"));
    synth("blob", &fix, &[]);
    ok(&register(&fix, &out, &["--sigma2", "0.1", "--band", "16"]));
    for f in [
        "velocity.raw",
        "velocity.json",
        "displacement_forward.raw",
        "displacement_inverse.raw",
        "warped_source.raw",
        "report.json",
        "convergence.csv",
        "summary.txt",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let r = report(&out);
    assert!(r["report"]["mse_rel"].as_f64().unwrap() < 0.1);
    assert!(r["report"]["jacobian_min"].as_f64().unwrap() > 0.0);
    assert_eq!(r["config"]["variant"], "defstate");
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().starts_with("status: ok"));
}

#[test]
fn identical_images_stop_at_the_first_iterate() {
    let tmp = tempfile::tempdir().unwrap();
    let (fix, out) = (tmp.path().join("fix"), tmp.path().join("run"));
    // the adversarial fixture writes the same blob as source and target
    synth("adversarial", &fix, &["--size", "32"]);
    ok(&register(&fix, &out, &[]));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    let r = report(&out);
    assert_eq!(r["report"]["mse_rel"].as_f64().unwrap(), 0.0);
    assert_eq!(r["report"]["jacobian_min"].as_f64().unwrap(), 1.0);
}

#[test]
fn explicit_transport_beyond_cfl_fails_loudly() {
    let tmp = tempfile::tempdir().unwrap();
    let (fix, out) = (tmp.path().join("fix"), tmp.path().join("run"));
    synth("adversarial", &fix, &["--size", "32", "--cfl", "8", "--nt", "5"]);
    let init = fix.join("velocity.raw");
    let init = init.to_str().unwrap();

    let rk = register(&fix, &out, &["--init", init, "--integrator", "rk", "--nt", "5", "--repr", "spatial"]);
    assert_eq!(rk.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&rk.stderr);
    assert!(stderr.contains("diverged at step"), "{stderr}");
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().starts_with("status: failed"));

    let sl_out = tmp.path().join("sl");
    ok(&register(&fix, &sl_out, &["--init", init, "--integrator", "sl", "--nt", "5", "--repr", "spatial"]));
}

#[test]
fn evaluate_reports_overlap_gain() {
    let tmp = tempfile::tempdir().unwrap();
    let (fix, out) = (tmp.path().join("fix"), tmp.path().join("run"));
    synth("discs", &fix, &["--shift", "5"]);
    let ls = fix.join("labels_source.raw");
    let lt = fix.join("labels_target.raw");
    let (ls, lt) = (ls.to_str().unwrap(), lt.to_str().unwrap());
    ok(&register(&fix, &out, &["--labels-source", ls, "--labels-target", lt, "--band", "8"]));
    assert!(out.join("warped_labels.raw").exists());

    let csv_path = tmp.path().join("overlap.csv");
    ok(&lddmm(&[
        "evaluate",
        "--transform",
        out.to_str().unwrap(),
        "--labels-source",
        ls,
        "--labels-target",
        lt,
        "--out",
        csv_path.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(csv_path).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2, "{csv}");
    for r in &rows {
        assert!(r[2] > r[1], "label {} did not improve: {csv}", r[0]);
    }
    // the report carries the same table
    let table = &report(&out)["report"]["overlap"];
    assert_eq!(table.as_array().unwrap().len(), 2);
}

#[test]
fn evaluate_on_matching_labels_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let (fix, out) = (tmp.path().join("fix"), tmp.path().join("run"));
    synth("discs", &fix, &["--size", "32", "--shift", "0"]);
    ok(&register(&fix, &out, &[]));
    let ls = fix.join("labels_source.raw");
    let res = lddmm(&[
        "evaluate",
        "--transform",
        out.to_str().unwrap(),
        "--labels-source",
        ls.to_str().unwrap(),
        "--labels-target",
        ls.to_str().unwrap(),
    ]);
    ok(&res);
    let csv = String::from_utf8(res.stdout).unwrap();
    for l in csv.lines().skip(1) {
        let cols: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!((cols[1], cols[2]), (1.0, 1.0), "{csv}");
    }
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("wall_ms");
            m.values_mut().for_each(strip_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[test]
fn runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let fix = tmp.path().join("fix");
    synth("rotation", &fix, &["--size", "32"]);
    let runs: Vec<Value> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = tmp.path().join(name);
            ok(&register(&fix, &out, &["--band", "8", "--max-iter", "3"]));
            let mut r = report(&out);
            strip_timing(&mut r);
            r["config"]["out"] = Value::Null;
            r
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(
        fs::read(tmp.path().join("a/velocity.raw")).unwrap(),
        fs::read(tmp.path().join("b/velocity.raw")).unwrap()
    );
}

#[test]
fn malformed_inputs_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let fix = tmp.path().join("fix");
    synth("blob", &fix, &["--size", "16"]);
    // truncate the payload behind its header
    let raw = fix.join("target.raw");
    let bytes = fs::read(&raw).unwrap();
    fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
    let res = register(&fix, &tmp.path().join("run"), &[]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("malformed field file"));

    let bad = lddmm(&["register", "--source", "a", "--target", "b", "--out", "c", "--variant", "bogus"]);
    assert!(!bad.status.success());
}
