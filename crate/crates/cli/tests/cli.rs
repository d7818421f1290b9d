use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    path.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probmatch")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn solve_full_disclosure() {
    let out = run(&["solve", &fixture("ex_a.json"), "--signal", "full", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows[0], ["program", "demand", "capacity", "cutoff"]);
    let cutoff: Vec<f64> = rows[1..].iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(cutoff, [2.0, 4.0, 1.7, 1.0]);

    let table = stdout(&run(&["solve", &fixture("ex_a.json"), "--signal", "full"]));
    assert!(table.contains("greatest market-clearing cutoff (2, 4, 1.7, 1)"), "{table}");
    assert!(table.contains("least market-clearing cutoff (1, 1, 1, 1)"), "{table}");
}

#[test]
fn solve_least_in_csv() {
    let out = run(&["solve", &fixture("ex_a.json"), "--signal", "partition", "--format", "csv", "--least"]);
    let rows = csv_rows(&stdout(&out));
    assert!(rows[1..].iter().all(|r| r[3] == "1"), "{rows:?}");
}

#[test]
fn solve_json_has_trace() {
    let out = run(&["solve", &fixture("ex_c.json"), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cutoff: Vec<f64> = serde_json::from_value(v["greatest"]["cutoff"].clone()).unwrap();
    assert!((cutoff[0] - 1.6).abs() < 1e-9 && cutoff[1] == 2.0, "{cutoff:?}");
    assert!(v["greatest"]["trajectory"].as_array().unwrap().len() >= 2);
}

#[test]
fn compare_verdict_line() {
    let out = run(&["compare", &fixture("ex_a.json"), "--left", "full", "--right", "partition"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("left more informative: yes; left Pareto dominated by right"));
    assert!(text.contains("right more informative: no"));
}

#[test]
fn demand_at_given_cutoff() {
    let out = run(&["demand", &fixture("ex_b.json"), "--cutoff", "1,2", "--format", "csv"]);
    let rows = csv_rows(&stdout(&out));
    let demand: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(demand, [0.5, 1.5]);
}

#[test]
fn welfare_columns() {
    let out = run(&["welfare", &fixture("ex_a.json"), "--signal", "partition", "--format", "csv"]);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows[0], ["student", "rank-1", "rank-2", "rank-3", "rank-4", "unmatched", "EU"]);
    let eu: Vec<f64> = rows[1..].iter().map(|r| r[6].parse().unwrap()).collect();
    let expected = [3.7, 4.0, 4.0, 4.0];
    assert!(eu.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12), "{eu:?}");
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", &fixture("ex_b.json"), "--draws", "5000", "--seed", "11", "--format", "csv"];
    let first = stdout(&run(&args));
    assert_eq!(first, stdout(&run(&args)));
    let rows = csv_rows(&first);
    assert_eq!(rows[0], ["program", "demand", "std_err", "capacity", "cutoff", "over_capacity"]);
}

#[test]
fn verify_passes_on_fixtures() {
    for name in ["ex_a.json", "ex_b.json", "ex_c.json"] {
        let out = run(&["verify", &fixture(name), "--format", "csv"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stdout(&out));
        assert!(stdout(&out).lines().skip(1).all(|l| l.contains(",pass,")));
    }
}

#[test]
fn reference_checks_pass() {
    for cmd in ["reference", "paper"] {
        let out = run(&[cmd]);
        assert_eq!(out.status.code(), Some(0));
        let text = stdout(&out);
        assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
        assert!(!text.contains("FAIL"));
    }
}

#[test]
fn tie_exits_with_four() {
    let out = run(&["solve", &fixture("ex_b.json"), "--signal", "null"]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(&["solve", &fixture("ex_b.json"), "--signal", "null", "--tie-break", "index"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn input_errors_exit_with_two() {
    let missing = run(&["solve", "does-not-exist.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let short = run(&["demand", &fixture("ex_a.json"), "--cutoff", "1,2"]);
    assert_eq!(short.status.code(), Some(2));
    let unknown = run(&["solve", &fixture("ex_a.json"), "--signal", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));

    let dir = std::env::temp_dir().join(format!("probmatch-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    let text = std::fs::read_to_string(fixture("ex_b.json")).unwrap().replacen("\"p2\"", "\"p9\"", 1);
    std::fs::write(&bad, text).unwrap();
    let out = run(&["solve", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = std::env::temp_dir().join(format!("probmatch-cli-nc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("slow.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture("ex_c.json")).unwrap()).unwrap();
    v["solver"] = serde_json::json!({"max_sweeps": 1});
    std::fs::write(&path, v.to_string()).unwrap();
    let out = run(&["solve", path.to_str().unwrap()]);
    std::fs::remove_dir_all(dir).unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
