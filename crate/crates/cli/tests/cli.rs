use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GEOMETRY: [&str; 3] = ["width=64", "height=48", "fx=64"];

fn cmaxreg(command: &str, config: Option<&Path>, overrides: &[String]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cmaxreg"));
    cmd.arg(command);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    for o in GEOMETRY.iter().map(|s| s.to_string()).chain(overrides.iter().cloned()) {
        cmd.arg("--override").arg(o);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth_zoom(dir: &Path, theta: f64) -> PathBuf {
    let out = dir.join("scene");
    let o = cmaxreg(
        "synth",
        None,
        &[
            format!("theta={theta}"),
            "synth_points=300".into(),
            "seed=3".into(),
            format!("output={}", out.display()),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn report_without_timing(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn synth_then_estimate_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_zoom(dir.path(), 0.4);
    assert!(scene.join("events.txt").is_file());
    assert!(scene.join("ground_truth.txt").is_file());
    let out = dir.path().join("est");
    let o = cmaxreg(
        "estimate",
        None,
        &[
            format!("input={}", scene.join("events.txt").display()),
            format!("ground_truth={}", scene.join("ground_truth.txt").display()),
            format!("output={}", out.display()),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "metrics.csv", "manifest.txt", "iwe_0_identity.pgm", "iwe_0_solved.pgm", "defmap_0.pgm"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 8);
    assert!(!row[1].is_empty(), "AEE present with ground truth");
}

#[test]
fn manifest_reproduces_report_single_threaded() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_zoom(dir.path(), 0.3);
    let first = dir.path().join("a");
    let o = cmaxreg(
        "estimate",
        None,
        &[
            format!("input={}", scene.join("events.txt").display()),
            "threads=1".into(),
            "images=false".into(),
            "window_events=1500".into(),
            format!("output={}", first.display()),
        ],
    );
    assert_eq!(code(&o), 0);
    let second = dir.path().join("b");
    let o = cmaxreg(
        "estimate",
        Some(&first.join("manifest.txt")),
        &[format!("output={}", second.display())],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = report_without_timing(&first.join("report.csv"));
    assert!(a.len() > 2);
    assert_eq!(a, report_without_timing(&second.join("report.csv")));
}

#[test]
fn empty_input_is_a_data_error_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.txt");
    fs::write(&input, "# t x y p\n").unwrap();
    let out = dir.path().join("out");
    let o = cmaxreg("estimate", None, &[format!("input={}", input.display()), format!("output={}", out.display())]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cmaxreg("estimate", None, &["no_such_key=1".into()])), 1);
    assert_eq!(code(&cmaxreg("launch", None, &[])), 1);
    assert_eq!(code(&cmaxreg("estimate", None, &[])), 1, "input is required");
    let scene = synth_zoom(dir.path(), 0.3);
    let o = cmaxreg(
        "bench",
        None,
        &[format!("input={}", scene.join("events.txt").display()), "bench_trials=0".into()],
    );
    assert_eq!(code(&o), 1);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "lambda = -1\n").unwrap();
    assert_eq!(code(&cmaxreg("estimate", Some(&cfg), &[])), 1);
}

#[test]
fn bench_needs_enough_events() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_zoom(dir.path(), 0.3);
    let o = cmaxreg(
        "bench",
        None,
        &[format!("input={}", scene.join("events.txt").display()), format!("output={}", dir.path().join("b").display())],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_table_has_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_zoom(dir.path(), 0.3);
    let out = dir.path().join("b");
    let o = cmaxreg(
        "bench",
        None,
        &[
            format!("input={}", scene.join("events.txt").display()),
            "bench_events=1000".into(),
            "bench_trials=3".into(),
            "bench_warmup=1".into(),
            format!("output={}", out.display()),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(table.lines().count(), 11);
}

#[test]
fn all_windows_failing_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_zoom(dir.path(), 0.3);
    let out = dir.path().join("out");
    let o = cmaxreg(
        "estimate",
        None,
        &[
            format!("input={}", scene.join("events.txt").display()),
            "bounds=1:1".into(),
            "images=false".into(),
            format!("output={}", out.display()),
        ],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let row = report.lines().nth(1).unwrap();
    assert!(row.contains("failed"));
    assert_eq!(row.split(',').count(), report.lines().next().unwrap().split(',').count());
}

#[test]
fn sweep_writes_landscape_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_zoom(dir.path(), 0.3);
    let out = dir.path().join("s");
    let o = cmaxreg(
        "sweep",
        None,
        &[
            format!("input={}", scene.join("events.txt").display()),
            "sweep_grid=21".into(),
            format!("output={}", out.display()),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("theta,neg_G,R,composite"));
    assert_eq!(csv.lines().count(), 22);
    assert!(fs::read(out.join("sweep.pgm")).unwrap().starts_with(b"P5\n"));
}

#[test]
fn ttc_appends_seconds_column() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_zoom(dir.path(), 0.3);
    let out = dir.path().join("t");
    let o = cmaxreg(
        "ttc",
        None,
        &[
            format!("input={}", scene.join("events.txt").display()),
            "images=false".into(),
            "regularizer=none".into(),
            format!("output={}", out.display()),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.lines().next().unwrap().ends_with(",ttc"));
    let row: Vec<f64> = report.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect();
    let (t_first, t_last, theta, ttc) = (row[1], row[2], row[5], row[13]);
    assert!(theta > 0.0);
    assert!((ttc * theta - (t_last - t_first)).abs() < 1e-12);
}
