use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hhlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn passing_pipeline_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "grid.nx=8\ngrid.ny=9\nsweep.steps=2\nrun.name=cli\n").unwrap();
    let out_dir = dir.path().join("out");

    let out = hhlab(&[
        "solve-abelian",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.starts_with("hhlab report\npipeline: solve-abelian\n"));
    assert!(report.contains("seed 7"), "--seed should override the config");
    for name in [
        "cli-solve-abelian.csv",
        "cli-solve-abelian-report.txt",
        "cli-solve-abelian-config.txt",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let csv = fs::read_to_string(out_dir.join("cli-solve-abelian.csv")).unwrap();
    assert!(csv.starts_with("check_name, value, threshold, pass\n"));
}

#[test]
fn failing_rows_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "grid.nx=8\ngrid.ny=9\nrun.name=cli\n").unwrap();

    // The order rows hold solution-rate bars the seed family cannot meet,
    // so lax-check always has failing rows here.
    let out = hhlab(&[
        "lax-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn bad_invocations_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "").unwrap();

    let out = hhlab(&["warp-drive", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unknown pipeline 'warp-drive'"));
    assert!(err.contains("full-suite"), "error should list the valid names");

    let out = hhlab(&["parity", "--config", "/no/such/file"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "grid.nz=4\n").unwrap();
    let out = hhlab(&["parity", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("grid.nz"));
    assert!(!Path::new("out").exists(), "no stray output directory");
}
