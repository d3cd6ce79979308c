use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qholo_core::formats::{read_csv_values, read_qhe1};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn qholo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qholo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QHOLO_OUT")
        .output()
        .unwrap()
}

fn csv(path: PathBuf) -> Vec<f64> {
    read_csv_values(&mut std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_scene_hologram_is_the_direct_term() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "scatterer = none\n");
    let a = tmp.path().join("empty");
    let b = tmp.path().join("dec");
    assert!(qholo(&["simulate", "--config", cfg.to_str().unwrap()], &a).status.success());
    assert!(qholo(&["decompose"], &b).status.success());
    let (h, d) = (csv(a.join("hologram.csv")), csv(b.join("direct.csv")));
    let scale = d.iter().copied().fold(0.0, f64::max);
    assert!(h.iter().zip(&d).all(|(x, y)| (x - y).abs() <= 1e-12 * scale));
}

#[test]
fn decomposition_files_sum_to_the_hologram() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("sim"), tmp.path().join("dec"));
    assert!(qholo(&["simulate"], &a).status.success());
    assert!(qholo(&["decompose"], &b).status.success());
    let h = csv(a.join("hologram.csv"));
    let parts: Vec<Vec<f64>> = ["direct.csv", "scattered.csv", "interference.csv"]
        .iter()
        .map(|f| csv(b.join(f)))
        .collect();
    let scale = h.iter().copied().fold(0.0, f64::max);
    for (i, v) in h.iter().enumerate() {
        let sum = parts[0][i] + parts[1][i] + parts[2][i];
        assert!((sum - v).abs() <= 1e-9 * scale, "cell {i}");
    }
    assert!(b.join("q_0.qhf").exists() && b.join("overlap.csv").exists());
}

#[test]
fn montecarlo_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = qholo(&["montecarlo", "--n", "1e6", "--seed", "7"], d);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ea = std::fs::read(a.join("events.qhe")).unwrap();
    assert_eq!(ea, std::fs::read(b.join("events.qhe")).unwrap());
    let (seed, name, events) = read_qhe1(&mut ea.as_slice()).unwrap();
    assert_eq!((seed, events.len()), (7, 1_000_000));
    assert_eq!(name, "chacha8-splitmix64-chunk65536");
    let l1: f64 = manifest(&a)["metrics"]["l1"].as_str().unwrap().parse().unwrap();
    assert!(l1 < 0.05);
}

#[test]
fn manifest_hashes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rec");
    assert!(qholo(&["reconstruct", "--threads", "2"], &out).status.success());
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["excluded"]["threads"], 2);
    let arts = m["artifacts"].as_object().unwrap();
    assert!(arts.contains_key("peaks.csv") && arts.contains_key("slice_7.pgm"));
    for (name, entry) in arts {
        let bytes = std::fs::read(out.join(name)).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)), "{name}");
    }
    let canonical = m["config"]["canonical"].as_str().unwrap();
    assert_eq!(qholo_core::config::parse_config(canonical).unwrap(), qholo_core::config::preset("fig1").unwrap());
}

#[test]
fn unknown_key_is_a_validation_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "seed = 3\n  colour = blue\n");
    let o = qholo(&["simulate", "--config", cfg.to_str().unwrap()], &tmp.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("colour"), "{err}");
}

#[test]
fn semantic_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "scatterer = 0 50000 0.3 0\n");
    let o = qholo(&["simulate", "--config", cfg.to_str().unwrap()], &tmp.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scatterer"));
    let o = qholo(&["simulate", "--preset", "nope"], &tmp.path().join("y"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_budget_failure_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mc");
    let o = qholo(&["montecarlo", "--preset", "gabor2d", "--n", "1000"], &out);
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["status"], "error");
    assert_eq!(m["error"]["code"], "budget-exceeded");
}

#[test]
fn oracle_check_reports_and_fails_on_tight_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = tmp.path().join("ok");
    let o = qholo(&["oracle-check"], &ok);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = std::fs::read_to_string(ok.join("report.txt")).unwrap();
    assert!(report.lines().count() >= 6 && report.lines().all(|l| l.starts_with("PASS")), "{report}");

    let tight = tmp.path().join("tight");
    let o = qholo(&["oracle-check", "--tolerance-scale", "1e-300"], &tight);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(manifest(&tight)["status"], "tolerance-failure");
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_qholo"))
        .arg("simulate")
        .env("QHOLO_OUT", &target)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("hologram.csv").exists());
}

#[test]
fn help_lists_defaults() {
    let o = Command::new(env!("CARGO_BIN_EXE_qholo")).arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("wall_mask = central 0.06") && text.contains("QHOLO_OUT"));
}
