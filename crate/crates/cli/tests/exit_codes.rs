use std::process::Command;

fn edgecache(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_edgecache"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn success_writes_csv_to_stdout() {
    let out = Command::new(env!("CARGO_BIN_EXE_edgecache"))
        .args([
            "place",
            "--set",
            "files=10",
            "--set",
            "segments=5",
            "--set",
            "budget=12",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# edgecache place\n"));
    assert!(text.contains("\nfile_id,c_f,s_f,q_f\n"));
}

#[test]
fn config_errors_exit_one() {
    let (code, err) = edgecache(&["place", "--set", "rho_per_km2=dense"]);
    assert_eq!(code, 1);
    assert!(err.contains("rho_per_km2"));
    assert_eq!(edgecache(&["place", "--set", "nonsense=1"]).0, 1);
    assert_eq!(
        edgecache(&["place", "--config", "/nonexistent/edgecache.conf"]).0,
        1
    );
    assert_eq!(edgecache(&["teleport"]).0, 1);
}

#[test]
fn model_validity_errors_exit_two() {
    let (code, err) = edgecache(&["place", "--set", "cluster_size=20"]);
    assert_eq!(code, 2);
    assert!(err.contains("spectral efficiency"));
}

#[test]
fn violated_rate_bound_exits_three() {
    // with far fewer users than SBSs the bound scales past what a single
    // user alone in its cell can reach
    let (code, err) = edgecache(&[
        "validate",
        "--set",
        "drops=10",
        "--set",
        "lambda_sweep_per_km2=5",
    ]);
    assert_eq!(code, 3);
    assert!(err.contains("rate bound violated"));
    assert_eq!(
        edgecache(&[
            "validate",
            "--set",
            "drops=10",
            "--set",
            "lambda_sweep_per_km2=500"
        ])
        .0,
        0
    );
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "# small library\nfiles = 10\nsegments = 5\nbudget = 12\n",
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_edgecache"))
        .args([
            "place",
            "--config",
            conf.to_str().unwrap(),
            "--set",
            "budget=3",
            "--output",
            out.to_str().unwrap(),
        ])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.contains("# budget = 3\n"));
    assert!(text.contains("# files = 10\n"));
}
