use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fbs-hinf"));
    c.env_remove("FBS_HINF_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn single_reason(o: &Output, reason: &str) {
    let err = stderr(o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error: reason={reason} ")), "{err}");
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synthesized(dir: &Path) -> PathBuf {
    let out = dir.join("syn");
    let o = run(&[
        "synthesize", "--bench", "cstr", "--gamma", "0.3", "--beta", "0.1", "--epsilon", "1", "--phi", "0", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("synthesis.json")
}

#[test]
fn synthesize_reactor_is_feasible_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let report = synthesized(dir.path());
    let r = json(&report);
    assert_eq!(r["result"]["status"], "strictly-feasible");
    assert!(r["result"]["margin"].as_f64().unwrap() <= -1e-7);
    assert_eq!(r["verification"]["passed"], true);
    let o = run(&["verify", report.to_str().unwrap(), "--gamma", "0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verification=pass"));
}

#[test]
fn tiny_gamma_names_the_feedthrough_obstruction() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synthesize", "--bench", "cstr", "--gamma", "1e-6", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    single_reason(&o, "no-feasible-point");
    assert!(stderr(&o).contains("DᵀD − γ²I"));
}

#[test]
fn missing_model_is_a_usage_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = run(&["synthesize", "--model", "/nonexistent/model.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    single_reason(&o, "missing-input");
    assert!(!out.exists());
}

#[test]
fn bad_flags_are_single_line_usage_errors() {
    let o = run(&["synthesize", "--gamma", "abc"]);
    assert_eq!(o.status.code(), Some(2));
    single_reason(&o, "usage");
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    single_reason(&o, "usage");
}

#[test]
fn verify_rejects_corruption_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let report = synthesized(dir.path());
    let o = run(&["verify", report.to_str().unwrap(), "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    single_reason(&o, "config-mismatch");

    let mut r = json(&report);
    r["result"]["P"][0][0][0] = Value::from(-100.0);
    let bad = dir.path().join("corrupt.json");
    fs::write(&bad, serde_json::to_string(&r).unwrap()).unwrap();
    let o = run(&["verify", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    single_reason(&o, "verification-failed");
}

#[test]
fn regulation_and_setpoint_figures() {
    let dir = tempfile::tempdir().unwrap();
    let report = synthesized(dir.path());
    let out = dir.path().join("sim");
    let o = run(&[
        "simulate", report.to_str().unwrap(), "--figure", "all", "--jobs", "2", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fig2 = json(&out.join("fig2-regulation.meta.json"));
    assert!(fig2["performance"]["settling_time"].as_f64().unwrap() < 0.1);
    assert!(fig2["performance"]["max_abs_u"].as_f64().unwrap() <= 0.1);
    assert_eq!(fig2["model_sha256"].as_str().unwrap().len(), 64);
    for k in 1..=3 {
        let meta = json(&out.join(format!("fig5-setpoint-ic{k}.meta.json")));
        let segs = meta["segments"].as_array().unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s["settling_time"].is_f64()));
    }
    let dev = json(&out.join("fig6.deviation.json"));
    assert_eq!(dev["max"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out.join("fig2-regulation.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x1,x2,u,y,z,w1,w2,V");
    assert_eq!(csv.lines().count(), 1 + 10_001);
}

#[test]
fn custom_batch_from_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let report = synthesized(dir.path());
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"x0": [[3.1, 1.5], [0.5, 0.6]], "horizon": 0.5, "step": 0.001, "disturbance": "zero"}"#,
    )
    .unwrap();
    let out = dir.path().join("batch");
    let o = bin()
        .args(["simulate", report.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--horizon", "0.2"])
        .args(["--plant", "both", "--setpoint", "4.5,1.266:77.7272", "--format", "json"])
        .env("FBS_HINF_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let first = json(&out.join("sim-ic1-fbs.json"));
    assert_eq!(first["spec"]["horizon"], 0.2);
    assert_eq!(first["trace"]["t"].as_array().unwrap().len(), 201);
    assert!(out.join("sim-ic2-nonlinear.meta.json").exists());
    assert!(out.join("sim-ic2.deviation.json").exists());
}

#[test]
fn schema_violations_stop_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"gama": 0.3}"#).unwrap();
    let o = run(&["synthesize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    single_reason(&o, "invalid-config");
    assert!(!dir.path().join("synthesis.json").exists());

    let report = synthesized(dir.path());
    let o = run(&["simulate", report.to_str().unwrap(), "--schedule", "2.0@4.5,1.266:77.7272"]);
    assert_eq!(o.status.code(), Some(2));
    single_reason(&o, "invalid-config");
}

#[test]
fn infeasible_report_cannot_be_simulated() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synthesize", "--gamma", "1e-6", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", dir.path().join("synthesis.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    single_reason(&o, "infeasible-report");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn bench_passes_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run(&["bench", "--out", a.to_str().unwrap(), "--jobs", "1"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let table = stdout(&o);
    for name in ["convergence", "control bound", "attenuation", "phi search", "gamma search"] {
        assert!(table.lines().any(|l| l.starts_with(name) && l.contains("PASS")), "{table}");
    }
    let o2 = run(&["bench", "--out", b.to_str().unwrap(), "--jobs", "3"]);
    assert!(o2.status.success());
    assert_eq!(stdout(&o2), table);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.len() > 10);
    assert!(sa == sb, "bench outputs differ between runs");
    let summary = json(&a.join("bench.json"));
    assert_eq!(summary["passed"], true);
    assert!(summary["gamma_min"].as_f64().unwrap() <= 0.3);
}

#[test]
fn sweep_reports_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep", "--gamma", "1e-6,0.3", "--epsilon", "0.5,1", "--phi", "0", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("0.000001,0.5,0,infeasible,"));
    assert!(rows[3].starts_with("0.3,1,0,strictly-feasible,"));
}
