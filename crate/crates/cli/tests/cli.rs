//! End-to-end runs of the `beamswarm` binary on short episodes.

use std::path::Path;
use std::process::{Command, Output};

use beamswarm::scenario::{load_config, ScenarioConfig};

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_beamswarm"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Config file with two-second episodes.
fn short_config(dir: &Path) -> String {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario.duration_s = 2.0;
    cfg.harness.lipschitz_samples = 100;
    let path = dir.join("short.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn config_output_reloads_to_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["config"]);
    let path = dir.path().join("printed.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    assert_eq!(load_config(&path).unwrap(), ScenarioConfig::default());
}

#[test]
fn shipped_default_config_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(load_config(path).unwrap(), ScenarioConfig::default());
}

#[test]
fn run_writes_csv_plots_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = run(dir.path(), &["--config", &cfg, "--seed", "3", "run", "--controller", "joint"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("Joint-MPC: min distance"));
    for f in ["links.csv", "steps.csv", "states.csv", "trajectories.svg", "min_distance.svg", "capacity.svg", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let links = std::fs::read_to_string(dir.path().join("links.csv")).unwrap();
    let mut lines = links.lines();
    assert_eq!(lines.next().unwrap(), "controller,realization,step,time_s,tx,rx,capacity_bps,misalignment_rad");
    // 20 steps of 3 links
    assert_eq!(lines.count(), 60);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"], "run");
}

#[test]
fn montecarlo_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let cfg = short_config(d.path());
        run(d.path(), &["--config", &cfg, "--seed", "7", "montecarlo", "--realizations", "2", "--controller", "joint", "--controller", "pid"]);
    }
    for f in ["links.csv", "steps.csv", "states.csv", "summary.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        assert_eq!(a, std::fs::read(dirs[1].path().join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(dirs[0].path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn sweep_and_theory_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = run(dir.path(), &["--config", &cfg, "sweep-epsilon", "--realizations", "1", "--epsilons", "0.03,0.1"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap().lines().count(), 3);
    let out = run(dir.path(), &["--config", &cfg, "theory"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("contraction at eps"));
    for f in ["theory.txt", "lipschitz.csv", "quadrature.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[solver]\nmax_iters = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_beamswarm"))
        .args(["--config", path.to_str().unwrap(), "config"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.max_iters"));
    let out = Command::new(env!("CARGO_BIN_EXE_beamswarm")).args(["run", "--controller", "nope"]).output().unwrap();
    assert!(!out.status.success());
}
