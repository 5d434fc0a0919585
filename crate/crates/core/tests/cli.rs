use std::path::Path;
use std::process::{Command, Output};

fn ccbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccbf"))
        .args(args)
        .output()
        .unwrap()
}

fn scenario(name: &str) -> String {
    format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = ccbf(&[
        "simulate",
        "--scenario",
        &scenario("hover.json"),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1001);

    // idempotent
    let first = std::fs::read(&out).unwrap();
    ccbf(&[
        "simulate",
        "--scenario",
        &scenario("hover.json"),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = ccbf(&[
        "bench",
        "--counts",
        "10,100,1000",
        "--mode",
        "both",
        "--reps",
        "10",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("count,mode,median_ms,p10_ms,p90_ms")
    );
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn check_passes_and_reports_injected_mismatch() {
    let o = ccbf(&["check", "--suite", "gradients", "--samples", "20"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );

    let o = ccbf(&[
        "check",
        "--suite",
        "gradients",
        "--samples",
        "20",
        "--inject-gradient-error",
        "1e-3",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.contains("FAIL gradients") && stdout.contains("x = ["),
        "{stdout}"
    );
}

#[test]
fn filter_step_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let obstacles = dir.path().join("obstacles.csv");
    std::fs::write(
        &state,
        r#"{"x": [0, 0, -1.3], "v": [1, 0, 0], "q": [1, 0, 0, 0], "T": 25.3098, "u_ref": [0, 0, 0, 0]}"#,
    )
    .unwrap();
    std::fs::write(&obstacles, "1.5,0,-1.3\n1.5,0.2,-1.3\n").unwrap();
    let o = ccbf(&[
        "filter-step",
        "--state",
        path_str(&state),
        "--obstacles",
        path_str(&obstacles),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["qp_cost"].as_f64().unwrap() > 0.0);
    assert_eq!(v["obstacles"], 2);
    assert!(v["h1"].is_number());

    let o = ccbf(&[
        "filter-step",
        "--state",
        path_str(&state),
        "--obstacles",
        path_str(&obstacles),
        "--epsilon",
        "0.3",
        "--p0",
        "-4",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(ccbf(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(ccbf(&[]).status.code(), Some(2));
    assert_eq!(
        ccbf(&["bench", "--mode", "gpu", "--out", "x.csv"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = ccbf(&[
        "simulate",
        "--scenario",
        "/does/not/exist.json",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/does/not/exist.json"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"scene": {}, "nonsense": 1}"#).unwrap();
    let o = ccbf(&[
        "simulate",
        "--scenario",
        path_str(&bad),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = ccbf(&[
        "bench",
        "--counts",
        "10",
        "--reps",
        "3",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
