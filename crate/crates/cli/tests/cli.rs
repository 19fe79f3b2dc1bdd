use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn vldp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vldp"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("VLDP_THREADS")
        .output()
        .expect("binary runs")
}

fn csv_value(path: &Path, column: &str) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == column).unwrap();
    row[k].to_string()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

/// Runs a command, replays its manifest and compares every listed output.
fn assert_replays(args: &[&str]) {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = vldp(first.path(), args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    let manifest = first.path().join("manifest.json");
    let o = vldp(second.path(), &["replay", "--manifest", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "replay of {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&read(first.path(), "manifest.json")).unwrap();
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for name in outputs {
        let name = name.as_str().unwrap();
        assert_eq!(read(first.path(), name), read(second.path(), name), "{args:?}: {name} differs");
    }
}

#[test]
fn validate_flags_rough_shifted_power_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("section4.cfg");
    let o = vldp(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    assert!(csv.contains("special_case,special_section4"), "{csv}");
    assert!(csv.contains("drift_at_zero,flagged"), "{csv}");
}

#[test]
fn validate_rejects_invalid_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    let text = std::fs::read_to_string(config("section4.cfg")).unwrap().replace("rho = -0.5", "rho = 1.5");
    std::fs::write(&cfg, text).unwrap();
    let o = vldp(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("rho_range              fail"));
}

#[test]
fn constant_volatility_rate_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bs.cfg");
    let o = vldp(dir.path(), &["rate", "--config", cfg.to_str().unwrap(), "--x", "0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rate: f64 = csv_value(&dir.path().join("rate.csv"), "rate").parse().unwrap();
    // x² / (2 σ² T) with σ = 0.2, T = 1
    assert!((rate - 1.125).abs() < 1e-4, "{rate}");
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("I_T(0.3) = 1.12500"));
}

#[test]
fn negative_level_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bs.cfg");
    let o = vldp(dir.path(), &["rate", "--config", cfg.to_str().unwrap(), "--x", "-0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rate: f64 = csv_value(&dir.path().join("rate.csv"), "rate").parse().unwrap();
    assert!((rate - 1.125).abs() < 1e-4, "{rate}");
}

#[test]
fn missing_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = vldp(dir.path(), &["rate", "--config", "/nonexistent/model.cfg", "--x", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn malformed_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bs.cfg");
    let o = vldp(dir.path(), &["rate", "--config", cfg.to_str().unwrap(), "--x", "abc"]);
    assert_eq!(o.status.code(), Some(2));
    let o = vldp(dir.path(), &["ldp-check", "--config", cfg.to_str().unwrap(), "--c", "0.3", "--eps", "0.1,0.2"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn manifest_records_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("section4.cfg");
    let o = vldp(
        dir.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--n", "20", "--eps", "0.2", "--paths", "50", "--seed", "9"],
    );
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["seeds"], serde_json::json!([9]));
    assert_eq!(m["grid"]["n_steps"], 20);
    assert_eq!(m["outputs"], serde_json::json!(["paths.csv"]));
    assert_eq!(m["config"].as_str().unwrap(), std::fs::read_to_string(&cfg).unwrap());
    assert_eq!(m["status"], "ok");
}

#[test]
fn simulation_is_deterministic_and_thread_independent() {
    let cfg = config("section4.cfg");
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--n", "30", "--eps", "0.1", "--paths", "300"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(vldp(a.path(), &args).status.success());
    let mut with_threads = vec!["--threads", "3"];
    with_threads.extend_from_slice(&args);
    assert!(vldp(b.path(), &with_threads).status.success());
    assert_eq!(read(a.path(), "paths.csv"), read(b.path(), "paths.csv"));
}

#[test]
fn replay_reproduces_rate() {
    let cfg = config("section4.cfg");
    assert_replays(&["rate", "--config", cfg.to_str().unwrap(), "--n", "64", "--x", "0.5", "--dump-weights"]);
}

#[test]
fn replay_reproduces_path_rate() {
    let cfg = config("section4.cfg");
    assert_replays(&["path-rate", "--config", cfg.to_str().unwrap(), "--n", "64", "--slope", "-0.4"]);
}

#[test]
fn replay_reproduces_simulation() {
    let cfg = config("section4.cfg");
    assert_replays(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "40",
        "--eps",
        "0.3",
        "--paths",
        "200",
        "--seed",
        "5",
        "--full-paths",
    ]);
}

#[test]
fn replay_reproduces_ldp_check() {
    let cfg = config("section4_mc.cfg");
    assert_replays(&[
        "ldp-check",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "32",
        "--c",
        "1",
        "--eps",
        "0.4,0.2",
        "--paths",
        "2000",
    ]);
}

#[test]
fn replay_reproduces_strike_and_taylor() {
    let cfg = config("section4.cfg");
    assert_replays(&["strike", "--config", cfg.to_str().unwrap(), "--n", "48"]);
    let cfg = config("section5.cfg");
    assert_replays(&["taylor", "--config", cfg.to_str().unwrap(), "--n", "48"]);
}

#[test]
fn replay_reproduces_validation() {
    let cfg = config("section5.cfg");
    assert_replays(&["validate", "--config", cfg.to_str().unwrap()]);
}

#[test]
fn path_rate_reads_target_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("section4.cfg");
    let n = 40;
    let mut target = String::from("t,g\n");
    for k in 0..=n {
        let t = k as f64 / n as f64;
        target.push_str(&format!("{t},{}\n", -0.4 * t));
    }
    let target_path = dir.path().join("target.csv");
    std::fs::write(&target_path, target).unwrap();
    let from_file = vldp(
        dir.path(),
        &["path-rate", "--config", cfg.to_str().unwrap(), "--n", "40", "--target", target_path.to_str().unwrap()],
    );
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    let a: f64 = csv_value(&dir.path().join("path_rate.csv"), "rate").parse().unwrap();
    let other = tempfile::tempdir().unwrap();
    let o = vldp(other.path(), &["path-rate", "--config", cfg.to_str().unwrap(), "--n", "40", "--slope", "-0.4"]);
    assert!(o.status.success());
    let b: f64 = csv_value(&other.path().join("path_rate.csv"), "rate").parse().unwrap();
    assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
}
