use std::path::Path;
use std::process::{Command, Output};

use eih_calib::dataset::{Dataset, GroundTruthFile, ResultReport};
use eih_calib::evaluation::hand_eye_error;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eih-calib")).args(args).output().expect("binary runs")
}

fn p(dir: &Path, f: &str) -> String {
    dir.join(f).to_string_lossy().into_owned()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) {
    let out = p(dir, name);
    let mut args = vec!["simulate", "--out", out.as_str()];
    args.extend_from_slice(extra);
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_defaults() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "d.json", &[]);
    let d = Dataset::from_json(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(d.waypoints.len(), 10);
    assert!(d.waypoints.iter().all(|w| w.observations.len() == 8));
    let gt = GroundTruthFile::from_json(&std::fs::read_to_string(dir.path().join("d.truth.json")).unwrap()).unwrap();
    assert_eq!(gt.landmarks.len(), 8);
    assert_eq!(gt.camera_poses.len(), 10);
}

#[test]
fn noiseless_ekf_and_batch_match_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "d.json", &["--noise", "0", "--seed", "4"]);
    let gt = GroundTruthFile::from_json(&std::fs::read_to_string(dir.path().join("d.truth.json")).unwrap()).unwrap();
    let truth = gt.true_x.to_transform().unwrap();
    let mut xs = Vec::new();
    for method in ["ekf", "batch"] {
        let out = p(dir.path(), &format!("{method}.json"));
        let o = bin(&["calibrate", "--dataset", &p(dir.path(), "d.json"), "--method", method, "--out", &out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let r = ResultReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(r.camera_trajectory.len(), 10);
        let x = r.x.to_transform().unwrap();
        let e = hand_eye_error(&x, &truth);
        assert!(e.translation_mm < 0.5 && e.rotation_rad < 1e-3, "{method}: {e:?}");
        xs.push(x);
    }
    let e = hand_eye_error(&xs[0], &xs[1]);
    assert!(e.translation_mm < 1e-6 && e.rotation_rad < 1e-6);
}

#[test]
fn translation_only_batch_exits_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "d.json", &["--preset", "paper", "--noise", "0"]);
    let out = p(dir.path(), "r.json");
    let o = bin(&["calibrate", "--dataset", &p(dir.path(), "d.json"), "--method", "batch", "--out", &out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
    assert!(!Path::new(&out).exists());
}

#[test]
fn invalid_dataset_exits_validation_without_output() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "d.json", &[]);
    let text = std::fs::read_to_string(dir.path().join("d.json")).unwrap();
    let broken = text.replacen("\"index\": 1", "\"index\": 0", 1);
    assert_ne!(broken, text);
    std::fs::write(dir.path().join("bad.json"), broken).unwrap();
    let out = p(dir.path(), "r.json");
    let o = bin(&["calibrate", "--dataset", &p(dir.path(), "bad.json"), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("waypoint") && err.contains("index"), "{err}");
    assert!(!Path::new(&out).exists());
}

#[test]
fn evaluate_writes_csv_and_catches_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "d.json", &["--waypoints", "7"]);
    let r = p(dir.path(), "r.json");
    assert!(bin(&["calibrate", "--dataset", &p(dir.path(), "d.json"), "--out", &r]).status.success());
    let csv = p(dir.path(), "e.csv");
    let json = p(dir.path(), "e.json");
    let o = bin(&[
        "evaluate",
        "--result",
        &r,
        "--ground-truth",
        &p(dir.path(), "d.truth.json"),
        "--csv",
        &csv,
        "--out",
        &json,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 7);

    simulate(dir.path(), "other.json", &["--waypoints", "9"]);
    let o = bin(&["evaluate", "--result", &r, "--ground-truth", &p(dir.path(), "other.truth.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mismatch"));

    let mut report = ResultReport::from_json(&std::fs::read_to_string(&r).unwrap()).unwrap();
    report.landmarks.pop();
    std::fs::write(&r, report.to_json()).unwrap();
    let o = bin(&["evaluate", "--result", &r, "--ground-truth", &p(dir.path(), "d.truth.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("landmark count mismatch"));
}

#[test]
fn evaluate_perfect_estimate_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "d.json", &[]);
    let gt = GroundTruthFile::from_json(&std::fs::read_to_string(dir.path().join("d.truth.json")).unwrap()).unwrap();
    let d = Dataset::from_json(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    let report = ResultReport {
        method: eih_calib::Method::Ekf,
        x: gt.true_x,
        residuals: eih_calib::dataset::ResidualsRecord { rotation_rad: 0.0, translation_mm: 0.0 },
        pairs_used: 10,
        camera_trajectory: d
            .waypoints
            .iter()
            .zip(&gt.camera_poses)
            .map(|(w, c)| eih_calib::dataset::TrajectoryPointRecord { index: w.index, pose: *c })
            .collect(),
        landmarks: Vec::new(),
        warnings: Vec::new(),
    };
    let r = p(dir.path(), "perfect.json");
    std::fs::write(&r, report.to_json()).unwrap();
    let json = p(dir.path(), "e.json");
    let o = bin(&["evaluate", "--result", &r, "--ground-truth", &p(dir.path(), "d.truth.json"), "--out", &json]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["hand_eye"]["translation_mm"].as_f64(), Some(0.0));
    assert_eq!(v["final_camera"]["l2_mm"].as_f64(), Some(0.0));
}

#[test]
fn reference_table_prints_published_numbers() {
    let o = bin(&["evaluate", "--paper-table"]);
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("0.70%, 46.39%, 2.60%"), "{s}");
    assert!(s.contains("L2 = 125.81"), "{s}");
    assert!(s.contains("L2 = 118.10") || s.contains("L2 = 118.11"), "{s}");
}

#[test]
fn selftest_passes() {
    let o = bin(&["selftest"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let s = String::from_utf8_lossy(&o.stdout);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{s}");
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        simulate(dir, "d.json", &["--seed", "7"]);
        assert!(bin(&["calibrate", "--dataset", &p(dir, "d.json"), "--out", &p(dir, "r.json")]).status.success());
    }
    for f in ["d.json", "d.truth.json", "r.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_dataset_reports_path() {
    let o = bin(&["calibrate", "--dataset", "/nonexistent/d.json", "--out", "/tmp/never.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/d.json"));
}
