use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oovtrack::eval::{run_sweep, SweepConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oovtrack"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tiny_sweep(dir: &Path) -> PathBuf {
    let cfg = SweepConfig { views: 6, s_values: vec![1.0, 0.5], seed: 4, ..SweepConfig::default() };
    let path = dir.join("sweep.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["track", "--mode", "sideways", "--scene", "x.json"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = run(&["sweep", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"views": 0}"#).unwrap();
    assert_eq!(run(&["sweep", "--config", bad.to_str().unwrap()]).status.code(), Some(3));

    let scene = configs().join("scene.json");
    let out = run(&["track", "--mode", "pf", "--scene", scene.to_str().unwrap(), "--steps", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.oovh");
    std::fs::write(&junk, b"not a heatmap").unwrap();
    let out = run(&["heatmap-info", junk.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn sweep_writes_manifest_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_sweep(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&["--seed", "9", "--threads", "2", "--out", out_dir.to_str().unwrap(), "sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert!(manifest["command"].as_array().unwrap().iter().any(|a| a == "sweep"));
    for f in ["summary.csv", "per_view.csv", "views.json", "reprojection.png", "translation.png", "rotation.png"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn track_render_and_pnp_check_run() {
    let dir = tempfile::tempdir().unwrap();
    let scene = configs().join("scene.json");
    let scene = scene.to_str().unwrap();
    let traj = dir.path().join("t.csv");
    for mode in ["pf", "opt"] {
        let out = run(&["--out", traj.to_str().unwrap(), "track", "--mode", mode, "--scene", scene, "--steps", "5", "--particles", "50"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(std::fs::read_to_string(&traj).unwrap().lines().count(), 6);
        assert!(dir.path().join("t.manifest.json").is_file());
        assert!(dir.path().join("t_overlay.png").is_file());
    }
    let render_dir = dir.path().join("r");
    let out = run(&["--out", render_dir.to_str().unwrap(), "render", "--scene", scene]);
    assert_eq!(out.status.code(), Some(0));
    let info = run(&["heatmap-info", render_dir.join("heatmaps.oovh").to_str().unwrap()]);
    assert_eq!(info.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&info.stdout).contains("channels 10"));
    let out = run(&["--out", dir.path().join("p").to_str().unwrap(), "pnp-check", "--scene", scene, "--noise", "0.5", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("5 trials at 0.5 px noise"));
    assert_eq!(std::fs::read_to_string(dir.path().join("p/pnp_check.csv")).unwrap().lines().count(), 6);
    assert!(dir.path().join("p/manifest.json").is_file());
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig::load(tiny_sweep(dir.path())).unwrap();
    let csv = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = run_sweep(&cfg, dir.path()).unwrap();
            (r.to_csv(), r.per_view_csv(&cfg.s_values))
        })
    };
    let one = csv(1);
    assert_eq!(one, csv(4));
    assert_eq!(one, csv(1));
}
