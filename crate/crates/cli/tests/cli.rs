use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rdp-audit"));
    c.env_remove("RDP_AUDIT_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const QUICK_DV: [&str; 6] = ["--batch-size", "100", "--epochs", "20", "--layers", "1,16,16,1"];

#[test]
fn convert_reports_embed_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let res = bin()
        .args(["convert", "gdp:1", "--to", "rdp", "--alpha", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
    let report = read_json(&out);
    assert_eq!(report["conversions"][0]["value"]["eps_alpha"], 1.0);
    assert_eq!(report["configuration"]["guarantee"], "gdp:1");
    assert!(report["version"].is_string());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("resolved configuration:"), "{stderr}");
}

#[test]
fn human_summary_uses_six_significant_digits() {
    let res = run(&["convert", "rdp:2,2", "--to", "dp", "--delta", "1e-5"]);
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("13.5129"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["convert", "gdp:1", "--bogus-flag", "1"])), 2);
    assert_eq!(code(&run(&["convert", "nonsense"])), 2);
    assert_eq!(
        code(&run(&[
            "audit",
            "--without-file",
            "/nonexistent/o.csv",
            "--with-file",
            "/nonexistent/w.csv",
            "--claim",
            "gdp:1"
        ])),
        2
    );
    // Group privacy precondition: alpha must be at least 2^{c+1}.
    assert_eq!(code(&run(&["convert", "rdp:2,1", "--group", "1"])), 2);
}

#[test]
fn infeasible_requests_exit_four() {
    assert_eq!(code(&run(&["minimax-check", "--d", "8", "--delta", "0.6"])), 4);
    assert_eq!(
        code(&run(&["plan", "--target-eps", "1e-3", "--class-spec", "100,1,30"])),
        4
    );
}

#[test]
fn clear_violation_exits_reject_and_true_claim_does_not() {
    let reject = bin()
        .args([
            "audit",
            "--simulate",
            "gaussian:0,5,1",
            "--trials",
            "2000",
            "--claim",
            "rdp:2,0.1",
            "--seed",
            "1",
        ])
        .args(QUICK_DV)
        .output()
        .unwrap();
    assert_eq!(code(&reject), 10);
    let accept = bin()
        .args([
            "audit",
            "--simulate",
            "gaussian:0,1,1",
            "--trials",
            "2000",
            "--claim",
            "rdp:2,1",
            "--seed",
            "1",
        ])
        .args(QUICK_DV)
        .output()
        .unwrap();
    assert_eq!(code(&accept), 0);
}

#[test]
fn config_file_merges_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[convert]\nalpha = 1.25\nto = \"rdp\"\n").unwrap();
    let out = dir.path().join("c.json");

    let from_file = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["convert", "gdp:2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&from_file), 0);
    assert_eq!(read_json(&out)["conversions"][0]["value"]["eps_alpha"], 2.5);

    let overridden = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["convert", "gdp:2", "--alpha", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&overridden), 0);
    assert_eq!(read_json(&out)["conversions"][0]["value"]["eps_alpha"], 4.0);
    assert!(String::from_utf8_lossy(&overridden.stderr).contains("overrides the config file"));
}

#[test]
fn environment_names_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[convert]\nalpha = 4.0\nto = \"rdp\"\n").unwrap();
    let out = dir.path().join("c.json");
    let res = bin()
        .env("RDP_AUDIT_CONFIG", &cfg)
        .args(["convert", "gdp:1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
    assert_eq!(read_json(&out)["conversions"][0]["value"]["eps_alpha"], 2.0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[convert]\nalhpa = 1.25\n").unwrap();
    let res = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["convert", "gdp:1"])
        .output()
        .unwrap();
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("alhpa"));
}

#[test]
fn simulate_then_audit_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = bin()
        .current_dir(d)
        .args([
            "simulate",
            "--simulate",
            "gaussian:0,1,1",
            "--trials",
            "1500",
            "--without-out",
            "o.csv",
            "--with-out",
            "w.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&sim), 0);
    let first = std::fs::read_to_string(d.join("o.csv")).unwrap();
    assert!(first.starts_with("trial,loss"));
    let audit = bin()
        .current_dir(d)
        .args([
            "audit",
            "--without-file",
            "o.csv",
            "--with-file",
            "w.csv",
            "--claim",
            "gdp:1",
            "--out",
            "r.json",
        ])
        .args(QUICK_DV)
        .output()
        .unwrap();
    assert_eq!(code(&audit), 0);
    let report = read_json(&d.join("r.json"));
    assert_eq!(report["provenance"]["source"]["kind"], "files");
    assert!(report["eps_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn estimate_plugin_matches_closed_form_scale() {
    let res = run(&[
        "estimate",
        "--simulate",
        "gaussian:1,0,1",
        "--n",
        "100000",
        "--alpha",
        "2",
        "--method",
        "plugin",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}
