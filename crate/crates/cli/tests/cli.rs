use std::path::Path;
use std::process::{Command, Output};

fn conflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conflow"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(tmp.path());
    let o = conflow(&[
        "simulate", "--n", "16", "--p0", "0.3", "--t-end", "1", "--out", &out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,H,Q,E,re_0,im_0"));
    let meta = std::fs::read_to_string(tmp.path().join("metadata.json")).unwrap();
    assert!(meta.contains("\"seed\": 0") && meta.contains("ChaCha20"));
}

#[test]
fn validation_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(tmp.path());
    assert_eq!(
        conflow(&["simulate", "--n", "4", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        conflow(&["decompose", "--p0", "1.5", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        conflow(&["inequality", "--delta", "-1", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(conflow(&["simulate", "--n", "abc"]).status.code(), Some(2));
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "nonsense = 3\n").unwrap();
    let o = conflow(&["simulate", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    // delta far outside the decomposition neighborhood.
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(tmp.path());
    let o = conflow(&[
        "decompose",
        "--n",
        "16",
        "--p0",
        "0.4",
        "--delta",
        "5",
        "--out",
        &out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let run_dir = tmp.path().join("from_file");
    std::fs::write(
        &cfg,
        format!(
            "n = 20\np0 = 0.2\ndelta = 1e-4\nout = {}\n",
            run_dir.display()
        ),
    )
    .unwrap();
    let o = conflow(&[
        "decompose",
        "--config",
        cfg.to_str().unwrap(),
        "--p0",
        "0.35",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let meta = std::fs::read_to_string(run_dir.join("metadata.json")).unwrap();
    assert!(meta.contains("\"p0\": 0.35"));
    assert!(meta.contains("\"n\": 20"));
}

#[test]
fn inequality_and_identities_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(tmp.path());
    let cfg = tmp.path().join("small.cfg");
    std::fs::write(&cfg, "samples = 500\n").unwrap();
    let o = conflow(&[
        "inequality",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "16",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("min_gap"));
    let o = conflow(&["verify-identities", "--out", &out]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    assert!(tmp.path().join("identities.json").exists());
}

#[test]
fn spectrum_suite_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(tmp.path());
    let o = conflow(&["spectrum", "--n", "64", "--p0", "0.3", "--out", &out]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    assert!(tmp.path().join("ground_p0.300_omega.csv").exists());
    assert!(tmp.path().join("single_mode_2_omega.csv").exists());
}

#[test]
fn drift_study_small_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("drift.cfg");
    std::fs::write(&cfg, "ensemble = 3\nsample-dt = 0.5\n").unwrap();
    let out = out_arg(tmp.path());
    let o = conflow(&[
        "drift-study",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "32",
        "--t-end",
        "2",
        "--seed",
        "5",
        "--out",
        &out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(tmp.path().join("run_002/track.csv")).unwrap();
    assert!(csv.starts_with("t,c,p,theta,mu,dist_h12,dist_h1,residual\n"));
    assert_eq!(csv.lines().count(), 1 + 5);
}
