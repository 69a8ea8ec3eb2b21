use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imuphys::io::{calibration_from_text, read_file};
use nalgebra::Matrix3;

fn imuphys(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imuphys")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, scenario: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--scenario", scenario, "--out-dir", p(dir)];
    args.extend_from_slice(extra);
    let out = imuphys(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join(scenario)
}

#[test]
fn track_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "weight_shift", &["--noise", "angle=1,vel=0.02,seed=5"]);
    let frames = base.with_extension("frames");
    let a = dir.path().join("a.states");
    let b = dir.path().join("b.states");
    for out in [&a, &b] {
        let r = imuphys(&["track", "--input", p(&frames), "--output", p(out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path(), "stand", &[]);
    let cfg = dir.path().join("track.toml");
    std::fs::write(&cfg, "refine_gravity = false\nseed = 3\n[contact]\nmu = 0.7\n").unwrap();
    let out = dir.path().join("stand.states");
    let r = imuphys(&["track", "--config", p(&cfg), "--input", p(&base.with_extension("frames")), "--output", p(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(read_file(&out).unwrap().starts_with("# tracked-states"));

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let r = imuphys(&["track", "--config", p(&cfg), "--input", p(&base.with_extension("frames")), "--output", p(&out)]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn eval_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let truth = synth(dir.path(), "walk_in_place", &[]).with_extension("truth");
    let report = dir.path().join("report.txt");
    let csv = dir.path().join("drift.csv");
    let r = imuphys(&["eval", "--pred", p(&truth), "--truth", p(&truth), "--report", p(&report), "--csv", p(&csv)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = read_file(&report).unwrap();
    for key in ["sip_error_deg", "ang_error_deg", "pos_error_cm"] {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(value, 0.0, "{line}");
    }
    let rows = read_file(&csv).unwrap();
    assert!(rows.starts_with("distance_m,error_m"));
    for row in rows.lines().skip(1) {
        assert_eq!(row.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let r = imuphys(&["eval", "--pred", p(&missing), "--truth", p(&missing)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing"));
    let out = dir.path().join("out");
    let r = imuphys(&["track", "--input", p(&missing), "--output", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(imuphys(&["track", "--bogus"]).status.code(), Some(1));
    assert_eq!(imuphys(&["synth", "--scenario", "moonwalk"]).status.code(), Some(1));
    assert_eq!(imuphys(&[]).status.code(), Some(1));
}

fn angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

#[test]
fn clean_calibration_has_identity_headings() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "calibration_walk", &[]).with_extension("imu");
    let out = dir.path().join("calib.txt");
    let r = imuphys(&["calibrate", "--input", p(&imu), "--output", p(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let cal = calibration_from_text(&read_file(&out).unwrap(), &out).unwrap();
    for h in &cal.r_heading {
        assert!(angle_deg(h, &Matrix3::identity()) < 1e-6);
    }
}

#[test]
fn drifted_calibration_recovers_headings() {
    let dir = tempfile::tempdir().unwrap();
    let drift: [f64; 6] = [12.0, -8.0, 15.0, -15.0, 5.0, 10.0];
    let imu = synth(dir.path(), "calibration_walk", &["--yaw-drift", "12,-8,15,-15,5,10"]).with_extension("imu");
    let out = dir.path().join("calib.txt");
    let r = imuphys(&["calibrate", "--input", p(&imu), "--output", p(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let cal = calibration_from_text(&read_file(&out).unwrap(), &out).unwrap();
    for (i, h) in cal.r_heading.iter().enumerate() {
        let want = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), (drift[5] - drift[i]).to_radians());
        assert!(angle_deg(h, want.matrix()) < 1.0, "sensor {i}");
    }
}

#[test]
fn truncated_calibration_log_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "calibration_walk", &[]).with_extension("imu");
    let text = read_file(&imu).unwrap();
    // Keep the first stand and the start of the step only.
    let kept: Vec<&str> = text.lines().take(1 + 6 * 400).collect();
    let short = dir.path().join("short.imu");
    std::fs::write(&short, kept.join("\n") + "\n").unwrap();
    let out = dir.path().join("calib.txt");
    let r = imuphys(&["calibrate", "--input", p(&short), "--output", p(&out)]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("calibrat"));
    assert!(!out.exists());
}
