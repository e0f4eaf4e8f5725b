use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covfdr::rule::{DecisionRule, Rule};
use serde_json::Value;
use tempfile::TempDir;

fn covfdr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covfdr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = covfdr(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn generate_writes_requested_rows_and_metadata() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "slope_1d", "--n", "20000", "--seed", "7", "-o", "data.csv"], d);
    let csv = read(d, "data.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "pvalue,f1,h");
    assert_eq!(lines.len(), 20001);
    let meta = json(d, "data.json");
    assert_eq!(meta["family"], "slope_1d");
    assert_eq!(meta["n"], 20000);
    assert_eq!(meta["seed"], 7);
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "gm_2d", "--n", "3000", "--seed", "3", "-o", "a.csv"], d);
    ok(&["generate", "--family", "gm_2d", "--n", "3000", "--seed", "3", "-o", "b.csv"], d);
    assert_eq!(read(d, "a.csv"), read(d, "b.csv"));
    ok(&["generate", "--family", "gm_2d", "--n", "3000", "--seed", "4", "-o", "c.csv"], d);
    assert_ne!(read(d, "a.csv"), read(d, "c.csv"));
}

#[test]
fn generate_from_spec_file_matches_flags() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "two_group", "--n", "500", "--seed", "2", "-o", "a.csv"], d);
    ok(&["generate", "--spec", "a.json", "-o", "b.csv", "--metadata", "b_meta.json"], d);
    assert_eq!(read(d, "a.csv"), read(d, "b.csv"));
    write(d, "cfg.json", r#"{"family": "two_group", "n": 500, "seed": 2, "output": "c.csv"}"#);
    ok(&["generate", "--config", "cfg.json"], d);
    assert_eq!(read(d, "a.csv"), read(d, "c.csv"));
}

#[test]
fn invalid_family_exits_2_and_lists_families() {
    let tmp = TempDir::new().unwrap();
    let out = covfdr(&["generate", "--family", "gm_9d", "--n", "10", "-o", "x.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["gm_1d", "slope_2d", "weak_dep", "pure_null"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "cfg.json", r#"{"family": "gm_1d", "n": 10, "colour": "red"}"#);
    let out = covfdr(&["generate", "--config", "cfg.json", "-o", "x.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn bh_on_four_p_values() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "p.csv", "pvalue,f1\n0.01,0\n0.02,1\n0.5,2\n0.9,3\n");
    ok(&["run", "--method", "bh", "--data", "p.csv", "--alpha", "0.1", "--out-dir", "out"], d);
    let out = d.join("out");
    let report = json(&out, "report.json");
    assert_eq!(report["D"], 2);
    assert_eq!(report["details"]["bh_threshold"], 0.02);
    assert!(report["FDP"].is_null());
    let disc = read(&out, "discoveries.csv");
    let rows: Vec<&str> = disc.lines().collect();
    assert_eq!(rows, ["index,pvalue,threshold,fold", "0,0.01,0.020000000000000004,", "1,0.02,0.020000000000000004,"]);
    assert_eq!(report["config"]["alpha"], 0.1);
    assert_eq!(report["config"]["method"], "bh");
}

#[test]
fn sbh_surfaces_floored_pi0() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "p.csv", "pvalue,f1\n0.001,0\n0.01,1\n0.2,2\n0.3,3\n");
    ok(&["run", "--method", "sbh", "--data", "p.csv", "--out-dir", "out"], d);
    let report = json(&d.join("out"), "report.json");
    assert_eq!(report["details"]["pi0_floored"], true);
    assert_eq!(report["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn malformed_row_exits_2_with_line_number() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "bad.csv", "pvalue,f1\n0.1,1\n0.2,2\n0.3,oops\n");
    let out = covfdr(&["run", "--method", "bh", "--data", "bad.csv", "--out-dir", "out"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let out = covfdr(&["run", "--method", "bh", "--data", "missing.csv", "--out-dir", "out"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flags_exit_2() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "p.csv", "pvalue,f1\n0.01,0\n0.5,1\n");
    for args in [
        vec!["run", "--method", "bh", "--data", "p.csv", "--alpha", "1.5", "--out-dir", "o"],
        vec!["run", "--method", "magic", "--data", "p.csv", "--out-dir", "o"],
        vec!["run", "--method", "bh", "--data", "p.csv"],
        vec!["frobnicate"],
    ] {
        assert_eq!(covfdr(&args, d).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn round_trip_counts_are_consistent() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "gm_2d", "--n", "4000", "--seed", "11", "-o", "data.csv"], d);
    for method in ["bh", "sbh", "groupbh"] {
        let dir = format!("out_{method}");
        ok(&["run", "--method", method, "--data", "data.csv", "--out-dir", &dir], d);
        let out = d.join(&dir);
        let report = json(&out, "report.json");
        let rows = read(&out, "discoveries.csv").lines().count() - 1;
        let d_count = report["D"].as_u64().unwrap() as usize;
        assert_eq!(d_count, rows, "{method}");
        let fd = report["FD"].as_u64().unwrap() as f64;
        let fdp = report["FDP"].as_f64().unwrap();
        assert!((fdp - fd / d_count.max(1) as f64).abs() < 1e-12);
        let fd_hat = report["FD_hat"].as_u64().unwrap() as f64;
        assert!((report["FDP_hat"].as_f64().unwrap() - fd_hat / d_count.max(1) as f64).abs() < 1e-12);
        let rule: Rule = serde_json::from_str(&read(&out, "rule.json")).unwrap();
        assert_eq!(rule.dim(), 2);
    }
}

#[test]
fn sweep_has_one_row_per_cell_and_reproduces() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "slope_1d", "--n", "3000", "--seed", "5", "-o", "data.csv"], d);
    let args = |o: &'static str| {
        vec!["sweep", "--data", "data.csv", "--methods", "bh,groupbh", "--alphas", "0.05,0.1,0.2", "--seeds", "1,2,3,4,5", "-o", o]
    };
    ok(&args("a.csv"), d);
    ok(&args("b.csv"), d);
    let a = read(d, "a.csv");
    assert_eq!(a, read(d, "b.csv"));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "method,alpha,seed,D,FDP,FDP_hat");
    assert_eq!(lines.len(), 31);
    assert_eq!(lines[1].split(',').take(3).collect::<Vec<_>>(), ["bh", "0.05", "1"]);
    let cfg = json(d, "a.config.json");
    assert_eq!(cfg["seeds"].as_array().unwrap().len(), 5);
}

#[test]
fn sweep_without_truth_leaves_fdp_empty() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "p.csv", "pvalue,f1\n0.01,0\n0.02,1\n0.5,2\n0.9,3\n");
    let out = ok(&["sweep", "--data", "p.csv", "--methods", "bh", "--alphas", "0.1", "-o", "s.csv"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(read(d, "s.csv").lines().nth(1).unwrap(), "bh,0.1,0,2,,0");
}

#[test]
fn bh_fdp_stays_near_alpha_in_sweeps() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut rows = 0;
    let mut within = 0;
    for seed in 1..=10 {
        let seed = seed.to_string();
        ok(&["generate", "--family", "slope_1d", "--n", "5000", "--seed", &seed, "-o", "data.csv"], d);
        ok(&["sweep", "--data", "data.csv", "--methods", "bh", "--alphas", "0.05,0.1,0.2", "-o", "s.csv"], d);
        for line in read(d, "s.csv").lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let alpha: f64 = f[1].parse().unwrap();
            let fdp: f64 = f[4].parse().unwrap();
            rows += 1;
            within += usize::from(fdp <= alpha + 0.05);
        }
    }
    assert!(within * 10 >= rows * 9, "{within}/{rows}");
}

#[test]
fn threshold_grid_shapes_and_values() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "p.csv", "pvalue,f1\n0.01,0\n0.02,1\n0.5,2\n0.9,3\n");
    ok(&["run", "--method", "bh", "--data", "p.csv", "--out-dir", "out"], d);
    ok(&["threshold-grid", "--rule", "out/rule.json", "--resolution", "7", "-o", "g1.csv"], d);
    let g = read(d, "g1.csv");
    let lines: Vec<&str> = g.lines().collect();
    assert_eq!(lines[0], "f1,t");
    assert_eq!(lines.len(), 8);
    let ts: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(ts.iter().all(|t| *t == ts[0]));

    ok(&["generate", "--family", "gm_2d", "--n", "3000", "--seed", "1", "-o", "d2.csv"], d);
    ok(&["run", "--method", "groupbh", "--data", "d2.csv", "--out-dir", "g2"], d);
    ok(&["threshold-grid", "--rule", "g2/rule.json", "--data", "d2.csv", "--resolution", "6", "-o", "g2.csv"], d);
    assert_eq!(read(d, "g2.csv").lines().count(), 37);

    ok(&["generate", "--family", "gm_5d", "--n", "3000", "--seed", "1", "-o", "d5.csv"], d);
    ok(&["run", "--method", "groupbh", "--data", "d5.csv", "--out-dir", "g5"], d);
    let out = ok(&["threshold-grid", "--rule", "g5/rule.json", "--data", "d5.csv", "--resolution", "4", "-o", "g5.csv"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("f3="));
    assert_eq!(read(d, "g5.csv").lines().count(), 17);
    let cfg = json(d, "g5.config.json");
    assert!(cfg["axes"][4]["fixed"]["value"].is_f64());
}

#[test]
fn threshold_grid_reproduces_rule_bit_exactly() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "gm_2d", "--n", "3000", "--seed", "9", "-o", "d.csv"], d);
    ok(&["run", "--method", "groupbh", "--data", "d.csv", "--out-dir", "o"], d);
    ok(&["threshold-grid", "--rule", "o/rule.json", "--resolution", "9", "-o", "g.csv"], d);
    let rule: Rule = serde_json::from_str(&read(&d.join("o"), "rule.json")).unwrap();
    for line in read(d, "g.csv").lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(rule.threshold(&v[..2]).to_bits(), v[2].to_bits());
    }
}

#[test]
fn threshold_grid_missing_rule_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = covfdr(&["threshold-grid", "--rule", "nope.json", "-o", "g.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn neuralfdr_run_writes_fold_artifacts() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "gm_1d", "--n", "3000", "--seed", "2", "-o", "d.csv"], d);
    let args = |o: &'static str| {
        vec!["run", "--method", "neuralfdr", "--data", "d.csv", "--seed", "4", "--opt-iters", "200", "--fit-iters", "300", "--batch-size", "1000", "--out-dir", o]
    };
    ok(&args("a"), d);
    ok(&args("b"), d);
    let a = d.join("a");
    for f in ["discoveries.csv", "training_log.csv", "rule_fold0.json"] {
        assert_eq!(read(&a, f), read(&d.join("b"), f), "{f}");
    }
    let mut report = json(&a, "report.json");
    let mut other = json(&d.join("b"), "report.json");
    report["config"]["out_dir"] = Value::Null;
    other["config"]["out_dir"] = Value::Null;
    assert_eq!(report, other);
    let folds = report["details"]["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 3);
    assert!(folds.iter().all(|f| f["gamma"].is_f64()));
    let disc = read(&a, "discoveries.csv");
    assert_eq!(disc.lines().count() - 1, report["D"].as_u64().unwrap() as usize);
    assert!(disc.lines().skip(1).all(|l| !l.ends_with(',')));
    assert_eq!(report["config"]["options"]["train"]["opt_iters"], 200);
}

#[test]
fn neuralfdr_pure_null_finds_almost_nothing() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "pure_null", "--n", "30000", "--seed", "1", "-o", "d.csv"], d);
    ok(&["run", "--method", "neuralfdr", "--data", "d.csv", "--opt-iters", "500", "--fit-iters", "500", "--out-dir", "o"], d);
    let report = json(&d.join("o"), "report.json");
    assert!(report["D"].as_u64().unwrap() as f64 / 30000.0 <= 0.002);
}

#[test]
fn too_small_for_neuralfdr_exits_2() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "--family", "gm_1d", "--n", "500", "--seed", "2", "-o", "d.csv"], d);
    let out = covfdr(&["run", "--method", "neuralfdr", "--data", "d.csv", "--out-dir", "o"], d);
    assert_eq!(out.status.code(), Some(2));
}
