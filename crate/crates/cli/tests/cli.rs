//! Behavior tests against the installed binary: exit codes, artifact
//! schemas, default handling, and headline output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MINIMAL: &str = r#"
[model]
h = { values = [115.0], unit = "cm-1" }
coupling = { value = 4.7035, unit = "cm-1" }

[model.vibron1]
offset = [1.0]
direction = [1.0]
frequency = { value = 110.0, unit = "cm-1" }
"#;

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.toml")
}

fn run(subcommand: &str, config: &Path, out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratchet"))
        .args([subcommand, "--config"])
        .arg(config)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .expect("spawn binary")
}

/// Writes `content` as config.toml in a fresh tempdir and runs the command.
fn run_with(subcommand: &str, content: &str) -> (TempDir, Output) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = tmp.path().join("config.toml");
    fs::write(&config, content).expect("write config");
    let out = run(subcommand, &config, &tmp.path().join("out"));
    (tmp, out)
}

fn summary(dir: &Path) -> serde_json::Value {
    let raw = fs::read(dir.join("summary.json")).expect("read summary");
    serde_json::from_slice(&raw).expect("parse summary")
}

fn last_line(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim_end().lines().last().unwrap_or("").to_string()
}

#[test]
fn missing_config_file_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("ratchet", &tmp.path().join("absent.toml"), &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn unknown_config_key_exits_with_config_error_naming_it() {
    let bad = format!("{MINIMAL}\n[experiment]\nthresold = 0.9\n");
    let (_tmp, out) = run_with("simulate", &bad);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("thresold"));
}

#[test]
fn invalid_field_value_exits_with_config_error() {
    let bad = format!("{MINIMAL}\n[experiment]\nthreshold = 1.5\n");
    let (_tmp, out) = run_with("ratchet", &bad);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment.threshold"));
}

#[test]
fn unreachable_trigger_exits_with_numerical_error() {
    // The drive never opens a crossing at 1% amplitude, so a 0.99 trigger
    // cannot fire within the window.
    let cfg = MINIMAL.replace("direction = [1.0]", "direction = [0.01]");
    let cfg = format!("{cfg}\n[experiment]\nthreshold = 0.99\n");
    let (_tmp, out) = run_with("ratchet", &cfg);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}

#[test]
fn out_dir_under_a_regular_file_exits_with_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.toml");
    fs::write(&config, MINIMAL).unwrap();
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, b"not a directory").unwrap();
    let out = run("crossing", &config, &blocker.join("out"));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn minimal_config_echo_fills_documented_defaults() {
    let (tmp, out) = run_with("simulate", MINIMAL);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("out"));
    let exp = &s["config"]["experiment"];
    assert_eq!(exp["start"].as_f64(), Some(0.0));
    assert_eq!(exp["threshold"].as_f64(), Some(0.5));
    assert_eq!(exp["horizon_periods"].as_f64(), Some(3.0));
    assert_eq!(s["config"]["model"]["vibron1"]["switch_on"].as_f64(), Some(0.0));
    assert_eq!(s["config"]["integrator"]["rel_tol"].as_f64(), Some(1e-10));
    assert_eq!(s["config"]["integrator"]["abs_tol"].as_f64(), Some(1e-10));
    assert_eq!(s["versions"]["tool"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert_eq!(s["command"].as_str(), Some("simulate"));
}

#[test]
fn wavenumbers_are_echoed_as_angular_frequency() {
    let (tmp, out) = run_with("simulate", MINIMAL);
    assert!(out.status.success());
    let s = summary(&tmp.path().join("out"));
    let h = s["config"]["model"]["h"]["values"][0].as_f64().unwrap();
    assert_eq!(h, ratchet_core::wavenumber_to_omega(115.0).unwrap());
    assert_eq!(s["config"]["model"]["h"]["unit"].as_str(), Some("rad_per_fs"));
}

#[test]
fn zero_coupling_keeps_all_population_on_level_one() {
    let cfg = MINIMAL.replace(
        "coupling = { value = 4.7035, unit = \"cm-1\" }",
        "coupling = { value = 0.0, unit = \"rad_per_fs\" }",
    );
    let (tmp, out) = run_with("simulate", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,re_c1,im_c1,re_c2,im_c2,rho11,rho22,diag1,diag2,gap")
    );
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 10);
        let (rho11, rho22) = (cols[5], cols[6]);
        assert!((rho11 - 1.0).abs() <= 1e-9, "rho11 drifted: {line}");
        assert!(rho22 <= 1e-12, "rho22 appeared: {line}");
        rows += 1;
    }
    assert!(rows > 100, "expected a recorded trajectory, got {rows} rows");
}

#[test]
fn lz_validation_csv_meets_schema_and_error_bound() {
    let (tmp, out) = run_with("lz-validate", MINIMAL);
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("out/lz_validation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("gamma,p_numeric,p_analytic,rel_error"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert!(row[3] <= 0.01, "rel_error too large: {row:?}");
    }
    assert!(last_line(&out.stdout).starts_with("max_rel_error="));
}

#[test]
fn ratchet_headline_reports_the_transition() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run("ratchet", &reference_config(), &out_dir);
    assert!(out.status.success());
    let headline = last_line(&out.stdout);
    assert!(headline.starts_with("p_direct="), "headline: {headline}");
    assert!(headline.contains(" p_reverse="), "headline: {headline}");
    assert!(headline.contains(" t2="), "headline: {headline}");

    let s = summary(&out_dir);
    let report = &s["results"]["report"];
    assert!(report["p_direct"].as_f64().unwrap() >= 0.9);
    assert!(report["p_reverse"].as_f64().unwrap() <= 0.05);
    assert_eq!(report["reverse_crossing"]["solvable"].as_bool(), Some(false));
    assert!(out_dir.join("direct.csv").is_file());
    assert!(out_dir.join("reverse.csv").is_file());

    // stdout lists every artifact before the headline
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in ["summary.json", "direct.csv", "reverse.csv"] {
        assert!(stdout.contains(name), "missing wrote-line for {name}");
    }
}

#[test]
fn sweep_csv_covers_the_default_grid() {
    // 3 couplings x 3 amplitude factors, short horizon so the grid is cheap.
    let (tmp, out) = run_with("sweep", MINIMAL);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("coupling,amplitude_factor,engaged,switch_time,p_direct,p_reverse_peak,irreversibility,direct_solvable,reverse_solvable")
    );
    assert_eq!(lines.count(), 9);
}

#[test]
fn repeat_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.toml");
    fs::write(&config, MINIMAL).unwrap();
    let (dir_a, dir_b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("simulate", &config, &dir_a).status.success());
    assert!(run("simulate", &config, &dir_b).status.success());
    for name in ["summary.json", "trajectory.csv"] {
        assert_eq!(
            fs::read(dir_a.join(name)).unwrap(),
            fs::read(dir_b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn crossing_command_reports_solvability_without_integrating() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run("crossing", &reference_config(), &out_dir);
    assert!(out.status.success());
    let headline = last_line(&out.stdout);
    assert!(headline.starts_with("direct_solvable=true"), "headline: {headline}");
    let s = summary(&out_dir);
    assert_eq!(s["results"]["direct"]["report"]["solvable"].as_bool(), Some(true));
    // The reference slow vibron blocks the return channel from any
    // crest-locked arming moment; the default switch_time 0 is one.
    assert_eq!(s["results"]["reverse"]["report"]["solvable"].as_bool(), Some(false));
    assert!(!out_dir.join("trajectory.csv").exists());
}

#[test]
fn mutate_reports_all_three_arms() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run("mutate", &reference_config(), &out_dir);
    assert!(out.status.success());
    let s = summary(&out_dir);
    let report = &s["results"]["report"];
    assert!(report["baseline"]["p_direct"].as_f64().unwrap() >= 0.9);
    assert!(report["perturbed"]["direct"]["p_final"].as_f64().unwrap() <= 0.05);
    assert!(report["without_second"]["direct"]["p_final"].as_f64().unwrap() >= 0.9);
    let headline = last_line(&out.stdout);
    assert!(headline.contains("perturbed_peak="), "headline: {headline}");
}
