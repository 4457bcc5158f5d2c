use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonon-nm")).args(args).output().expect("binary runs")
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

fn sidecar(dir: &Path, stem: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json"))).unwrap()).unwrap()
}

const SHORT_TRACE: [&str; 8] = [
    "--override",
    "mode.n_max=4",
    "--override",
    "state.fock=1",
    "--override",
    "window.t_final=4",
    "--override",
    "window.samples=41",
];

#[test]
fn trace_distance_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("resonance.cfg");
    let mut args = vec!["trace-distance", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    args.extend(SHORT_TRACE);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("resonance.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_dimensionless,D_resonant,D_offresonant"));
    assert_eq!(lines.count(), 41);

    let meta = sidecar(dir.path(), "resonance");
    assert_eq!(meta["experiment"], "trace-distance");
    assert_eq!(meta["rows"], 41);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    let resolved = meta["resolved_config"].as_str().unwrap();
    assert!(resolved.contains("n_max = 4") && resolved.contains("rtol = "), "{resolved}");
    let nd = meta["results"]["N_D"].as_f64().unwrap();
    let off = meta["results"]["N_D_offresonant"].as_f64().unwrap();
    assert!(nd > 0.0 && off < nd, "N_D {nd}, off-resonant {off}");
}

#[test]
fn resolved_config_reproduces_the_csv_bitwise() {
    let first = tempfile::tempdir().unwrap();
    let cfg = config("resonance.cfg");
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", first.path().to_str().unwrap()];
    args.extend(SHORT_TRACE);
    assert!(run(&args).status.success());
    let meta = sidecar(first.path(), "resonance");

    let second = tempfile::tempdir().unwrap();
    let replay = second.path().join("resonance.cfg");
    std::fs::write(&replay, meta["resolved_config"].as_str().unwrap()).unwrap();
    let out = run(&["run", "--config", replay.to_str().unwrap(), "--out", second.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(first.path().join("resonance.csv")).unwrap();
    let b = std::fs::read(second.path().join("resonance.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(sidecar(second.path(), "resonance")["config_hash"], meta["config_hash"]);
}

#[test]
fn blp_temperature_scan_honours_count_override_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("blp-temperature.cfg");
    let overrides = [
        "grid.count=6",
        "optimizer.pop_size=8",
        "optimizer.generations=2",
        "resolution.low_window=5",
        "resolution.low_samples=26",
        "resolution.high_window=5",
        "resolution.high_samples=51",
    ];
    let mut args = vec!["blp-temp", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "7", "--threads", "2"];
    for o in &overrides {
        args.extend(["--override", o]);
    }
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("blp-temperature.csv")).unwrap();
    assert!(csv.starts_with("T_K,N_BLP,evaluations\n"));
    assert_eq!(csv.lines().count(), 7);
    let meta = sidecar(dir.path(), "blp-temperature");
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["threads"], 2);
    assert!(meta["resolved_config"].as_str().unwrap().contains("seed = 7"));
    let checkpoint = meta["checkpoint"].as_str().unwrap();
    assert_eq!(std::fs::read_to_string(checkpoint).unwrap().lines().count(), 6);

    // a rerun resumes from the checkpoint and reproduces the values
    let first = csv.lines().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect::<Vec<_>>();
    assert!(run(&args).status.success());
    let again = std::fs::read_to_string(dir.path().join("blp-temperature.csv")).unwrap();
    assert_eq!(first, again.lines().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect::<Vec<_>>());
    assert_eq!(std::fs::read_to_string(checkpoint).unwrap().lines().count(), 6);
}

#[test]
fn spectrum_map_covers_the_quadrant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("spectrum-ring.cfg");
    let out = run(&["spectrum-map", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--override", "grid.count=3", "--override", "mode.n_max=4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("spectrum-ring.csv")).unwrap();
    assert!(csv.starts_with("B_x_T,B_z_T,ratio\n"));
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn validate_passes_and_reports_truncation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("validate.cfg");
    let ok = run(&["validate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let meta = sidecar(dir.path(), "validate");
    assert_eq!(meta["results"]["all_passed"], true);

    let bad = run(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "mode.n_max=1",
        "--override",
        "mode.g1_delta=0.05",
        "--override",
        "mode.g2_delta=0.05",
    ]);
    assert_eq!(bad.status.code(), Some(3));
    let err = stderr_error(&bad);
    assert_eq!(err["kind"], "checks_failed");
    assert!(err["message"].as_str().unwrap().contains("truncation"));
}

#[test]
fn invalid_physics_and_schema_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("resonance.cfg");
    let base = ["trace-distance", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];

    let neg_q = run(&[&base[..], &["--override", "mode.quality=-5"]].concat());
    assert_eq!(neg_q.status.code(), Some(2));
    assert!(stderr_error(&neg_q)["message"].as_str().unwrap().contains("quality"));

    let unknown = run(&[&base[..], &["--override", "mode.colour=blue"]].concat());
    assert_eq!(unknown.status.code(), Some(2));
    let err = stderr_error(&unknown);
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("mode.colour"));

    let both_units = run(&[&base[..], &["--override", "mode.omega_ph_ghz=48"]].concat());
    assert_eq!(both_units.status.code(), Some(2));

    let mismatch = run(&["validate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert_eq!(stderr_error(&mismatch)["kind"], "config");

    let missing = run(&["trace-distance", "--config", dir.path().join("nope.cfg").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let usage = run(&["trace-distance"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(stderr_error(&usage)["kind"], "usage");
    assert!(!dir.path().join("resonance.csv").exists());
}
