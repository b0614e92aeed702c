use std::fs;
use std::process::{Command, Output};

fn morseflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morseflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SADDLE: &str = r#"{
  "name": "saddle-file",
  "variables": ["x", "y"],
  "objective": "x^2 - y^2",
  "box": [[-2, 2], [-2, 2]],
  "proper_on_box": true,
  "seed": 3
}"#;

#[test]
fn bench_saddle_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = morseflow(&["bench", "saddle", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("corollary: pass"));
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["corollary_verdict"], "pass");
    assert_eq!(json["problem"]["name"], "saddle");
}

#[test]
fn run_problem_file_as_csv_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("saddle.json");
    fs::write(&problem, SADDLE).unwrap();
    let out = dir.path().join("out");
    let o = morseflow(&[
        "run",
        "--problem",
        problem.to_str().unwrap(),
        "--stages",
        "critical,loja,cond4",
        "--format",
        "csv-bundle",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let table = fs::read_to_string(out.join("modulus_table.csv")).unwrap();
    assert!(table.starts_with("r,d,n_landed,n_captured\n"));
    assert!(out.join("critical_points.csv").exists());
}

#[test]
fn identical_runs_write_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = morseflow(&[
            "bench",
            "planes",
            "--stages",
            "critical,cond1",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(b.join("report.json")).unwrap()
    );
}

#[test]
fn flow_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("saddle.json");
    fs::write(&problem, SADDLE).unwrap();
    let o = morseflow(&[
        "flow",
        "--problem",
        problem.to_str().unwrap(),
        "--from",
        "0.5,0.1",
        "--direction",
        "down",
        "--stop-level",
        "-0.5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,y_1,y_2,f,grad_norm,arc_len"));
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    // xy is conserved along the flow of x^2 - y^2.
    assert!((last[1] * last[2] - 0.05).abs() < 1e-6);
    assert!((last[3] + 0.5).abs() < 1e-9);

    // Starting on the stable axis the flow converges to the saddle instead.
    let o = morseflow(&[
        "flow",
        "--problem",
        problem.to_str().unwrap(),
        "--from",
        "0.5,0",
        "--stop-level",
        "-0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes_for_errors() {
    assert_eq!(morseflow(&["bench", "nope"]).status.code(), Some(3));
    assert_eq!(morseflow(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(
        morseflow(&["bench", "saddle", "--stages", "cond4"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        morseflow(&["bench", "saddle", "--stages", "bogus"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        morseflow(&["run", "--problem", "/nonexistent/p.json"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(morseflow(&["--help"]).status.code(), Some(0));
    assert_eq!(morseflow(&["--version"]).status.code(), Some(0));
}
