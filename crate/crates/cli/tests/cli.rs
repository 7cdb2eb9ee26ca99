use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn whitney(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whitney"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn modulus_sup_of_identity() {
    let v = json_of(&whitney(&["compute", "modulus-sup", "--fn", "x_1d", "--r", "1", "--p", "inf", "--t", "0.3"]));
    let value = v["result"]["value"].as_f64().unwrap();
    assert!((value - 0.3).abs() <= 2.0 / 17.0, "{value}");
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["h_samples"], 17);
    assert!(v["policy"]["vacuous_rel"].is_number());
}

#[test]
fn difference_of_member_vanishes() {
    let v = json_of(&whitney(&["compute", "difference", "--fn", "bilinear_2d", "--r", "2,2", "--t", "0.1,0.2", "--p", "inf"]));
    assert!(v["result"]["max_abs"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn total_omega_terms_sum_to_total() {
    let v = json_of(&whitney(&["compute", "total-omega", "--fn", "exp_sum_2d", "--r", "1,1", "--grid", "24", "--hsamples", "9"]));
    let terms = v["result"]["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 3);
    let sum: f64 = terms.iter().map(|t| t["value"].as_f64().unwrap()).sum();
    let total = v["result"]["total"].as_f64().unwrap();
    assert!((sum - total).abs() <= 1e-12 * total.abs());
}

#[test]
fn best_linear_fit_of_square() {
    let v = json_of(&whitney(&["approx", "best", "--fn", "x2_1d", "--r", "2", "--p", "2", "--grid", "256"]));
    let err = v["result"]["error"].as_f64().unwrap();
    assert!((err - 1.0 / (6.0 * 5f64.sqrt())).abs() < 1e-3, "{err}");
    assert_eq!(v["result"]["coefficients"].as_array().unwrap().len(), 2);
}

#[test]
fn best_constant_of_identity() {
    let v = json_of(&whitney(&["approx", "constant", "--fn", "x_1d", "--p", "1", "--grid", "256"]));
    assert!((v["result"]["beta"].as_f64().unwrap() - 0.5).abs() < 1e-2);
    assert!((v["result"]["error"].as_f64().unwrap() - 0.25).abs() < 1e-3);
}

#[test]
fn taylor_coefficients_of_exponential_sum() {
    let v = json_of(&whitney(&["approx", "taylor", "--fn", "exp_sum_2d", "--r", "2,2"]));
    let coeffs: Vec<f64> = v["result"]["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["value"].as_f64().unwrap())
        .collect();
    assert_eq!(coeffs.len(), 4);
    for c in coeffs {
        assert!((c - 1.0).abs() < 1e-12);
    }
}

#[test]
fn piecewise_on_quarters() {
    let v = json_of(&whitney(&["approx", "piecewise", "--fn", "x_2d", "--parts", "2", "--grid", "32", "--p", "1"]));
    assert_eq!(v["result"]["betas"].as_array().unwrap().len(), 4);
}

#[test]
fn corpus_listing_and_tags() {
    let out = whitney(&["corpus", "--format", "json"]);
    let v = json_of(&out);
    assert!(v["entries"].as_array().unwrap().len() >= 12);

    let out = whitney(&["corpus", "--tag", "Hölder-singular", "--format", "json"]);
    let v = json_of(&out);
    let entries = v["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    assert!(entries.iter().all(|e| e["tag"] == "holder-singular"));

    let out = whitney(&["corpus", "--tag", "nonsense", "--format", "json"]);
    assert!(json_of(&out)["entries"].as_array().unwrap().is_empty());
}

#[test]
fn csv_output() {
    let out = whitney(&["corpus", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("name,dim,tag,derivatives,description"));

    let out = whitney(&["compute", "modulus-mean", "--fn", "x_1d", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value"));
    assert!(text.lines().any(|l| l.starts_with("result.value,")));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["compute", "nope", "--fn", "x_1d"],
        vec!["compute", "modulus-sup", "--fn", "no_such_fn"],
        vec!["compute", "modulus-sup"],
        vec!["compute", "modulus-sup", "--fn", "x_1d", "--t", "-1"],
        vec!["compute", "modulus-sup", "--fn", "x_1d", "--p", "0"],
        vec!["approx", "taylor", "--fn", "abs_1d"],
        vec!["verify", "--suite", "bogus"],
        vec!["frobnicate"],
    ] {
        let out = whitney(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "function = \"x_1d\"\nr = [1]\np = \"inf\"\nt = [0.5]\nh_samples = 9\n").unwrap();
    let out_path = dir.path().join("nested").join("out.json");
    let out = whitney(&[
        "compute",
        "modulus-sup",
        "--config",
        cfg.to_str().unwrap(),
        "--t",
        "0.25",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&out_path);
    assert_eq!(v["config"]["t"][0], 0.25);
    assert_eq!(v["config"]["h_samples"], 9);
    assert!((v["result"]["value"].as_f64().unwrap() - 0.25).abs() < 1e-12);

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = whitney(&["compute", "modulus-sup", "--config", cfg.to_str().unwrap(), "--fn", "x_1d"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_identities_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ids.json");
    let out = whitney(&["verify", "--suite", "identities", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&path);
    assert_eq!(v["passed"], true);
    assert!(v["reports"].as_array().unwrap().iter().all(|r| r["status"] == "pass"));
}

#[test]
fn verify_whitney_on_members_is_vacuous() {
    let out = whitney(&["verify", "--suite", "whitney", "--fn", "bilinear_2d", "--grid", "16", "--hsamples", "9", "--format", "json"]);
    let v = json_of(&out);
    let reports = v["reports"].as_array().unwrap();
    let r22: Vec<&Value> = reports.iter().filter(|r| r["params"]["r"] == serde_json::json!([2, 2])).collect();
    assert!(!r22.is_empty());
    assert!(r22.iter().all(|r| r["status"] == "vacuous"));
}

#[test]
fn verify_hard_failure_exits_one_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    // a negative slack turns every non-vacuous `W <= Ω` check into a failure
    std::fs::write(&cfg, "[tolerance]\nmean_vs_sup_rel = -0.5\ninflate_by_h_gap = false\n").unwrap();
    let path = dir.path().join("eq.json");
    let out = whitney(&[
        "verify", "--suite", "equivalence", "--fn", "exp_1d", "--grid", "16", "--hsamples", "5", "--p", "1",
        "--config", cfg.to_str().unwrap(), "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = read_json(&path);
    assert_eq!(v["passed"], false);
    assert_eq!(v["policy"]["mean_vs_sup_rel"], -0.5);
}

#[test]
fn repeated_verify_is_byte_identical() {
    let args = ["verify", "--suite", "whitney", "--fn", "sin_1d", "--grid", "16", "--hsamples", "5", "--seed", "7"];
    let a = whitney(&args);
    let b = whitney(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
