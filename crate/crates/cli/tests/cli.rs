use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn seqglr() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_seqglr"));
    cmd.env_remove("SEQGLR_THREADS").env("RUST_LOG", "error");
    cmd
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn with_stdin(cmd: &mut Command, input: &str) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // The child may exit on a flag error before reading its input.
    if let Err(e) = child.stdin.take().unwrap().write_all(input.as_bytes()) {
        assert_eq!(e.kind(), std::io::ErrorKind::BrokenPipe, "{e}");
    }
    child.wait_with_output().unwrap()
}

fn reports(stdout: &[u8]) -> Vec<Value> {
    String::from_utf8_lossy(stdout)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn two_change_fixture_matches_golden() {
    let out = seqglr()
        .args(["detect", "--family", "gaussian", "--multi", "--input"])
        .arg(fixture("two_changes.txt"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("# {"), "manifest header missing: {header}");
    assert!(header.contains("\"subcommand\":\"detect\""));

    let golden = std::fs::read(fixture("two_changes.golden.jsonl")).unwrap();
    let want = reports(&golden);
    let got = reports(&out.stdout);
    assert_eq!(want.len(), 2);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g["detection_time"], w["detection_time"]);
        assert_eq!(g["tau_hat"], w["tau_hat"]);
        assert_eq!(g["threshold"], w["threshold"]);
        let (a, b) = (g["statistic"].as_f64().unwrap(), w["statistic"].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} vs {b}");
    }
}

#[test]
fn quiet_prefix_reports_nothing() {
    let text = std::fs::read_to_string(fixture("two_changes.txt")).unwrap();
    let head: Vec<&str> = text.lines().take(101).collect();
    let out = with_stdin(seqglr().args(["detect", "--family", "gaussian"]), &head.join("\n"));
    assert!(out.status.success());
    assert!(reports(&out.stdout).is_empty());
}

#[test]
fn single_change_mode_stops_at_first_report() {
    let out = seqglr()
        .args(["detect", "--family", "gaussian", "--input"])
        .arg(fixture("two_changes.txt"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let got = reports(&out.stdout);
    assert_eq!(got.len(), 1);
    assert_eq!(got[0]["tau_hat"], 100);
}

#[test]
fn zero_in_exponential_input_exits_2_with_line() {
    let out = with_stdin(
        seqglr().args(["detect", "--family", "exponential"]),
        "1.5\n0.7\n0\n2.0\n",
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unparseable_line_exits_2_with_line() {
    let out = with_stdin(
        seqglr().args(["detect", "--family", "gaussian"]),
        "# comment\n1.0\n\n2.0\nabc\n",
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("abc"), "{err}");
}

#[test]
fn flag_errors_exit_2() {
    let cases: &[&[&str]] = &[
        &["detect", "--family", "exponential", "--statistic", "hz"],
        &["detect", "--family", "gaussian", "--arl0", "123"],
        &["detect", "--family", "gaussian", "--window", "4"],
        &["benchmark", "--table", "mean", "--reps", "0"],
        &["calibrate", "--family", "gaussian", "--arl0", "0.5", "--reps", "10"],
    ];
    for args in cases {
        let out = with_stdin(seqglr().args(*args), "1\n2\n");
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

fn calibrate_small(dir: &Path, name: &str) -> (Output, PathBuf) {
    let path = dir.join(name);
    let out = seqglr()
        .args([
            "calibrate",
            "--family",
            "gaussian",
            "--arl0",
            "20",
            "--reps",
            "2000",
            "--tmax",
            "80",
            "--seed",
            "7",
        ])
        .arg("--output")
        .arg(&path)
        .output()
        .unwrap();
    (out, path)
}

#[test]
fn calibration_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = calibrate_small(dir.path(), "table.csv");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(&path).unwrap();
    let (out, _) = calibrate_small(dir.path(), "table.csv");
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(&path).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("manifest {"));
    assert!(text.lines().any(|l| l.starts_with("80,")));
}

#[test]
fn too_few_replications_exit_3() {
    let out = seqglr()
        .args([
            "calibrate",
            "--family",
            "gaussian",
            "--arl0",
            "500",
            "--reps",
            "100",
            "--tmax",
            "30",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("increase the replication count"));
}

#[test]
fn calibrated_table_feeds_detect() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = calibrate_small(dir.path(), "table.csv");
    assert!(out.status.success());
    let out = seqglr()
        .args(["detect", "--family", "gaussian", "--multi", "--input"])
        .arg(fixture("two_changes.txt"))
        .arg("--threshold-file")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = reports(&out.stdout);
    // ARL0 = 20 is trigger-happy, but both real changes must be among the reports.
    for tau in [100, 300] {
        assert!(
            got.iter().any(|r| (r["tau_hat"].as_i64().unwrap() - tau).abs() <= 3),
            "{got:?}"
        );
    }

    // A table for the other family is rejected.
    let out = with_stdin(
        seqglr()
            .args(["detect", "--family", "exponential", "--threshold-file"])
            .arg(&path),
        "1\n",
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_writes_grid_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("summary.json");
    let out = seqglr()
        .args(["benchmark", "--table", "exp", "--reps", "40", "--seed", "3", "--json"])
        .arg(&json)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().find(|l| l.starts_with("tau,")).unwrap();
    assert!(header.starts_with("tau,delta,M_t,M_t se,M^c_t,M^c_t se"), "{header}");
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count(),
        1 + 17
    );

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["manifest"]["seed"], 3);
    assert_eq!(summary["grids"][0]["replications"], 40);
}
