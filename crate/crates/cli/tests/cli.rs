use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sojourn_core::record::RunRecord;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sojourn"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("SOJOURN_SEED")
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn payload(mut v: Value) -> Value {
    let obj = v.as_object_mut().unwrap();
    for k in ["started", "finished", "threads"] {
        obj.remove(k);
    }
    v
}

fn estimate(v: &Value, i: usize) -> (f64, f64, f64, f64) {
    let e = &v["payload"]["estimates"][i]["value"];
    let f = |k: &str| e[k].as_f64().unwrap();
    (f("mean"), f("stderr"), f("ci_low"), f("ci_high"))
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn pickands_berman_near_one_with_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["pickands", "--alpha", "1", "--method", "berman", "--n", "20000"]);
    let (mean, se, _, _) = estimate(&v, 0);
    assert!((mean - 1.0).abs() < 4.0 * se + 0.03, "{mean} ± {se}");
    assert!((v["payload"]["bounds"]["new_bound"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!((v["payload"]["bounds"]["old_bound"].as_f64().unwrap() - 0.0625).abs() < 1e-12);
    assert_eq!(v["seed"]["master_seed"].as_u64().unwrap(), 0x5EED);
}

#[test]
fn pickands_sup_reports_normalized_value() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["pickands", "--alpha", "1.5", "--method", "sup", "--span", "10", "--n", "20000"]);
    let e = &v["payload"]["estimates"][0];
    let norm = &e["diagnostics"]["normalized"];
    let (mean, se) = (norm["mean"].as_f64().unwrap(), norm["stderr"].as_f64().unwrap());
    assert!((mean - e["value"]["mean"].as_f64().unwrap() / 10.0).abs() < 1e-12 * mean);
    // H_1.5 lies between the α=2 and α=1 values; boundary effects add O(1/S)
    assert!(mean > 0.5642 - 3.0 * se && mean < 1.0 + 0.2 + 3.0 * se, "{mean} ± {se}");
}

#[test]
fn payload_independent_of_run_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["pickands", "--alpha", "1.5", "--n", "5000", "--span", "4"];
    let a = ok_json(dir.path(), &args);
    let b = ok_json(dir.path(), &args);
    let mut with_threads = vec!["--threads", "1"];
    with_threads.extend(args);
    let c = ok_json(dir.path(), &with_threads);
    with_threads[1] = "4";
    let d = ok_json(dir.path(), &with_threads);
    let bytes = |v: &Value| serde_json::to_vec(&payload(v.clone())).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(bytes(&a), bytes(&c));
    assert_eq!(bytes(&a), bytes(&d));

    let other = ok_json(dir.path(), &["--seed", "7", "pickands", "--alpha", "1.5", "--n", "5000", "--span", "4"]);
    assert_ne!(estimate(&a, 0).0, estimate(&other, 0).0);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sojourn"))
        .args(["--out-dir", dir.path().to_str().unwrap(), "tfunc", "--x", "1"])
        .env("SOJOURN_SEED", "0x10")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"]["master_seed"].as_u64().unwrap(), 16);
}

#[test]
fn records_are_persisted_and_strict() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["tfunc", "--beta", "1.5", "--b", "1", "--eta", "0", "--x", "2"]);
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let name = files[0].file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("tfunc-") && name.ends_with(".json"));
    let text = std::fs::read_to_string(&files[0]).unwrap();
    let record = RunRecord::from_json(&text).unwrap();
    assert_eq!(record.command, "tfunc");
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["extra"] = Value::Bool(true);
    assert!(RunRecord::from_json(&v.to_string()).is_err());
}

#[test]
fn piterbarg_at_least_one() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(
        dir.path(),
        &["piterbarg", "--alpha", "1", "--b", "1", "--x", "0", "--eta", "0", "--span", "4", "--n", "10000", "--verify"],
    );
    let (mean, se, _, _) = estimate(&v, 0);
    assert!(mean + 3.0 * se >= 1.0, "{mean} ± {se}");
    let (sup, sup_se, _, _) = estimate(&v, 1);
    assert!(sup >= 1.0);
    assert!((mean - sup).abs() <= 4.0 * (se * se + sup_se * sup_se).sqrt());
}

#[test]
fn gcdf_at_zero_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["gcdf", "--alpha", "1", "--x", "0", "--n", "5000", "--span", "4"]);
    let (mean, _, lo, hi) = estimate(&v, 0);
    assert_eq!(mean, 0.0);
    assert!(lo <= 0.0 && 0.0 <= hi);
}

#[test]
fn berman_rate_and_companions() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(
        dir.path(),
        &["berman", "--alpha", "1", "--eta", "0", "--x", "0", "--S-list", "2,4", "--n", "50000", "--span", "4", "--verify"],
    );
    let estimates = v["payload"]["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 3);
    assert_eq!(estimates[0]["constant_id"], "berman_rate");
    let (rate, se, _, _) = estimate(&v, 0);
    assert!((rate - 1.0).abs() < 4.0 * se + 0.05, "{rate} ± {se}");
}

#[test]
fn tfunc_examples() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["tfunc", "--beta", "1.5", "--b", "1", "--eta", "0", "--x", "2"]);
    let t = v["payload"]["rows"][0]["closed"].as_f64().unwrap();
    assert!((t - 0.3678794).abs() < 1e-7);
    let v = ok_json(dir.path(), &["tfunc", "--beta", "1.5", "--b", "1", "--eta", "0.2", "--x", "0.1"]);
    assert_eq!(v["payload"]["rows"][0]["closed"].as_f64().unwrap(), 1.0);
}

#[test]
fn tfunc_figure_steps_at_odd_multiples() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["tfunc", "--beta", "1.5", "--b", "1", "--eta", "0.2", "--x-range", "0:2:201"]);
    let rows = v["payload"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 402);
    let lattice: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r["eta"].as_f64().unwrap() == 0.2)
        .map(|r| (r["x"].as_f64().unwrap(), r["closed"].as_f64().unwrap()))
        .collect();
    let jumps: Vec<f64> = lattice.windows(2).filter(|w| w[1].1 != w[0].1).map(|w| w[1].0).collect();
    let expected = [0.2, 0.6, 1.0, 1.4, 1.8];
    assert_eq!(jumps.len(), expected.len(), "{jumps:?}");
    for (j, e) in jumps.iter().zip(expected) {
        // first node at or past the jump; nodes are 0.01 apart
        assert!(*j >= e - 1e-9 && *j < e + 0.01 + 1e-9, "{jumps:?}");
    }
    for (x, t) in &lattice {
        let m = jumps.iter().filter(|j| *x >= **j).count() as f64;
        assert_eq!(*t, (-(m * 0.2f64).powf(1.5)).exp(), "x={x}");
    }
    assert_eq!(csv_files(dir.path()).len(), 1);
}

#[test]
fn bounds_figure_rows_and_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["bounds-figure", "--alpha-range", "0.05:2:40"]);
    assert_eq!(v["payload"]["dominance"], true);
    let v = ok_json(dir.path(), &["bounds-figure", "--alpha-range", "1:2:11"]);
    let rows = v["payload"]["rows"].as_array().unwrap();
    let pick = |i: usize, k: &str| rows[i][k].as_f64().unwrap();
    assert!((pick(0, "new_bound") - 0.25).abs() < 1e-12);
    assert!((pick(0, "old_bound") - 0.0625).abs() < 1e-12);
    assert!((pick(10, "new_bound") - 0.443113).abs() < 1e-6);
    assert!((pick(10, "old_bound") - 0.141047).abs() < 1e-6);
    let csv = std::fs::read_to_string(dir.path().join(&csv_files(dir.path())[0])).unwrap();
    assert!(csv.starts_with("alpha,new_bound,old_bound\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| run(dir.path(), args).status.code().unwrap();
    assert_eq!(code(&["bounds-figure", "--tamper-gamma"]), 1);
    assert_eq!(code(&["bounds-figure", "--alpha-range", "0.1:2:5"]), 2);
    assert_eq!(code(&["pickands"]), 2);
    assert_eq!(code(&["pickands", "--alpha", "3"]), 2);
    assert_eq!(code(&["pickands", "--alpha", "1", "--method", "nope"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    let out = run(dir.path(), &["sojourn", "--u", "5", "--n", "1000"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("paths would be required"));
}

#[test]
fn sojourn_levels_reproducible() {
    let args = ["sojourn", "--alpha", "1", "--u-list", "2.5,3.0", "--n", "100000", "--constants-n", "2000"];
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = ok_json(first.path(), &args);
    let b = ok_json(second.path(), &args);
    assert_eq!(payload(a.clone()), payload(b));
    assert!(a["payload"]["report"]["trend"].is_array());
    let (fa, fb) = (csv_files(first.path()), csv_files(second.path()));
    assert_eq!(fa.len(), 2);
    for (x, y) in fa.iter().zip(&fb) {
        let cx = std::fs::read_to_string(first.path().join(x)).unwrap();
        let cy = std::fs::read_to_string(second.path().join(y)).unwrap();
        assert_eq!(cx, cy);
        assert!(cx.contains("x,count,n,p_hat,ci_low,ci_high,predicted,ratio"));
        assert!(cx.starts_with("# seed=0x5eed"));
    }
}

#[test]
fn sojourn_variance_dominated_uses_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(
        dir.path(),
        &["sojourn", "--model", "modulated", "--alpha", "1", "--beta", "0.5", "--b", "1", "--u", "2.5", "--x", "0,0.5", "--n", "100000"],
    );
    let curve = &v["payload"]["curves"][0];
    assert_eq!(curve["regime"]["variance_dominated"]["interior"], true);
    let p = &curve["points"][0];
    let predicted = p["predicted"].as_f64().unwrap();
    assert!((predicted - 0.00620966532577613).abs() < 1e-9, "{predicted}");
}

#[test]
fn validate_subset_and_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["validate", "--only", "4,5,7"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.contains("PASS")).count(), 3, "{text}");

    let out = run(dir.path(), &["validate", "--only", "4", "--tamper-gamma"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion  4 FAIL"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed criteria: [4]"));
}
