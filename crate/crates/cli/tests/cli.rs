use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gmmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmmlab")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sample_is_deterministic_and_clean_without_flips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for f in [&a, &b] {
        let out = gmmlab(&["sample", "--figure", "fig1", "--n", "100", "--seed", "7", "--out", path(f)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(v["n"], 100);
    assert_eq!(v["p"], 1500);
    assert_eq!(v["X"].as_array().unwrap().len(), 100 * 1500);
    assert_eq!(v["y"], v["y_c"]);
}

#[test]
fn sample_estimate_risk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let beta: Vec<f64> = (0..20).map(|i| if i == 0 { 2.0 } else { 0.0 }).collect();
    let m = serde_json::json!({"beta": beta, "spectrum": vec![1.0; 20], "flip_prob": 0.1});
    fs::write(&model, m.to_string()).unwrap();
    let data = dir.path().join("d.json");
    let out = gmmlab(&["sample", "--model", path(&model), "--n", "10", "--out", path(&data), "--format", "bin"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("d.bin").exists());

    let clf = dir.path().join("svm.json");
    let out = gmmlab(&["estimate", "--data", path(&data), "--estimator", "svm", "--out", path(&clf)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&clf).unwrap()).unwrap();
    assert!(v["support_set"].is_array());
    assert!(v["duality_gap"].as_f64().unwrap().abs() < 1e-4);

    let out = gmmlab(&["risk", "--model", path(&model), "--classifier", path(&clf), "--mc", "20000", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let text = v.to_string();
    assert!(text.contains("risk"), "{text}");

    let out = gmmlab(&["estimate", "--data", path(&data), "--estimator", "ridge"]);
    assert_eq!(out.status.code(), Some(2), "ridge without --tau");
}

#[test]
fn check_thm2_reports_both_clauses() {
    let out = gmmlab(&["check", "thm2", "--n", "10", "--p", "300", "--eta-norm", "1"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["all_hold"], true);
    let clauses = v["clauses"].as_array().unwrap();
    assert_eq!(clauses.len(), 2);
    assert!(clauses.iter().all(|c| c["holds"] == true));

    let out = gmmlab(&["check", "thm2", "--n", "10", "--p", "300", "--eta-norm", "1", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("theorem_id,all_hold,"));
    assert!(text.contains("thm2,true,2,2,"));
}

#[test]
fn errors_map_to_exit_codes() {
    let out = gmmlab(&["check", "thm2", "--n", "10", "--p", "300", "--eta-norm", "1", "--constants", "Q=1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_input");

    let out = gmmlab(&["check", "thm2", "--figure", "fig4", "--n", "10"]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "structural_mismatch");

    let out = gmmlab(&["estimate", "--data", "/nonexistent/d.json", "--estimator", "ls"]);
    assert_eq!(out.status.code(), Some(2));

    let out = gmmlab(&["check", "thm99"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"grid":[{"model":{"preset":{"figure":"fig1"}},"svm":true,"bogus":1}],"trials":2}"#).unwrap();
    let out = gmmlab(&["sweep", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"grid":[{"coords":{"n":20},"model":{"preset":{"figure":"fig1","params":{"n":20}}},"svm":true,"taus":[0]}],"trials":3,"base_seed":4}"#,
    )
    .unwrap();
    let out = gmmlab(&["sweep", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep_aggregates.csv")).unwrap();
    assert!(csv.starts_with("point,coords,metric,mean,std,count,failed_trials"));
    assert!(csv.contains("sv_fraction"));
    assert!(csv.contains("risk_svm"));
}

#[test]
fn figure_writes_panels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("o.json");
    fs::write(&cfg, r#"{"n_grid":[20,40],"eta_grid":[0.2]}"#).unwrap();
    let out = gmmlab(&["figure", "fig1", "--config", path(&cfg), "--trials", "3", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["fig1_left.csv", "fig1_right.csv", "fig1_summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let left = fs::read_to_string(dir.path().join("fig1_left.csv")).unwrap();
    let mut lines = left.lines();
    assert_eq!(lines.next(), Some("n,eta,raw_x,rescaled_x,sv_fraction_mean,sv_fraction_std"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn verify_quick_prints_suite_lines() {
    let out = gmmlab(&["verify", "--quick"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("identity: ") && first.ends_with(" pass"), "{first}");
    assert!(text.lines().any(|l| l.starts_with("certificate: ")));
}
