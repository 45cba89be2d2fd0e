use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "name": "small",
  "problem": {"kind": "quadratic", "d": 20, "L": 2.0, "seed": 3},
  "noise": {"sigma_g": 0.2, "k_g": 2.1, "bias_rel": 0.0, "sigma_f": 0.1, "k_f": 2.1},
  "shared": {"gamma0_l": 0.5, "eps_f": 0.2},
  "methods": [{"method": "cons_nag"}, {"method": "raas"}, {"method": "raas_double", "label": "double"}],
  "seeds": [1, 2],
  "horizon": 60
}"#;

fn raas(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_raas"));
    cmd.args(args).env_remove("RAAS_OUT_DIR").env_remove("RAAS_JOBS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = raas(
        &["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "manifest.json",
        "failures.json",
        "gaps.svg",
        "double_seed1.csv",
        "raas_aggregate.csv",
        "cons_nag_seed2.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let agg = fs::read_to_string(out.join("raas_aggregate.csv")).unwrap();
    assert!(agg.starts_with("t,mean_gap,std_gap\n1,"));
    assert_eq!(agg.lines().count(), 61);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["fingerprint"].as_str().unwrap().len(), 64);
}

#[test]
fn formats_and_env_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("env_out");
    let o = raas(
        &["run", "--config", &cfg, "--formats", "csv"],
        &[("RAAS_OUT_DIR", &out)],
    );
    assert!(o.status.success());
    assert!(out.join("raas_seed1.csv").exists());
    assert!(!out.join("gaps.svg").exists());
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL
        .replace("\"raas\"}", "\"raas\", \"clip\": 1.0}")
        .replace("[1, 2]", "[1, 1]")
        .replace("\"cons_nag\"", "\"nag\"");
    let cfg = write_config(dir.path(), &bad);
    let o = raas(&["run", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("`nag`") && err.contains("distinct") && err.contains("clip"),
        "{err}"
    );
}

#[test]
fn parse_errors_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"problem\": {\"kind\": \"quadratic\",}\n}");
    let o = raas(&["constants", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn failing_runs_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    // theory tolerances with a modulus the problem does not have fail inside the run
    let text = SMALL.replace(
        "{\"method\": \"raas\"}",
        "{\"method\": \"raas\", \"params\": {\"mu\": 0.5, \"tolerance_mode\": \"theory\", \"gamma_max\": 1.0}}",
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = raas(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    let failures: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures.as_array().unwrap().len(), 2);
    assert!(out.join("double_seed1.csv").exists());
}

#[test]
fn verify_passes_on_a_clean_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = raas(&["verify", "--config", &cfg], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["verdicts"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_writes_one_directory_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        "\"shared\"",
        "\"sweep\": [{\"sigma_g\": 0.0, \"k_g\": 2.1, \"bias_rel\": 0.0, \"sigma_f\": 0.0, \"k_f\": 2.1}, {\"sigma_g\": 1.0, \"k_g\": 2.1, \"bias_rel\": 0.0, \"sigma_f\": 1.0, \"k_f\": 2.1}], \"shared\"",
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("sweep");
    let o = raas(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success());
    assert!(out.join("sweep_000/manifest.json").exists());
    assert!(out.join("sweep_001/manifest.json").exists());
}

#[test]
fn constants_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "problem": {"kind": "quadratic", "d": 20, "L": 5.0, "seed": 1, "min_eigenvalue": 1.0},
      "shared": {"gamma0": 0.1, "theta": 0.5, "vartheta": 0.1},
      "methods": [{"method": "sgd"}, {"method": "raas"}]
    }"#;
    let cfg = write_config(dir.path(), text);
    let o = raas(&["constants", "--config", &cfg], &[]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["method"], "raas");
    assert!((v["constants"]["gamma_bar"].as_f64().unwrap() - 0.7 / 4.5).abs() < 1e-12);
}
