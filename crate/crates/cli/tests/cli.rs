use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn infq(workspace: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infq"))
        .arg("--workspace")
        .arg(workspace)
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn example(kind: &str, rows: usize) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let ws = dir.path().join(kind);
    let out = Command::new(env!("CARGO_BIN_EXE_infq"))
        .args(["--seed", "3", "gen-example", kind])
        .arg(&ws)
        .args(["--rows", &rows.to_string()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    (dir, ws)
}

fn query(ws: &Path) -> String {
    ws.join("query.sql").to_string_lossy().into_owned()
}

fn sorted_lines(path: &Path) -> Vec<String> {
    let mut lines: Vec<String> = std::fs::read_to_string(path).unwrap().lines().map(String::from).collect();
    lines.sort();
    lines
}

#[test]
fn optimize_prints_trace_and_sql() {
    let (_d, ws) = example("hospital", 500);
    let out = infq(&ws, &["optimize", &query(&ws)]);
    assert!(out.status.success());
    let trace = text(&out.stderr);
    for rule in ["push_predicates", "prune_tree", "split_model_query", "inline_tree", "eliminate_joins"] {
        assert!(trace.contains(rule), "{rule} missing from\n{trace}");
    }
    let sql = text(&out.stdout);
    assert!(sql.contains("UNION ALL"), "{sql}");
    assert!(sql.contains("__nn_"), "{sql}");
}

#[test]
fn explain_shows_plans_and_graphs() {
    let (_d, ws) = example("hospital", 200);
    let out = infq(&ws, &["--explain", "optimize", &query(&ws)]);
    let trace = text(&out.stderr);
    assert!(trace.contains("-- before") && trace.contains("-- after"));
    assert!(trace.contains("-- graph los__nn_1"));
    assert!(trace.contains("\"nodes\""));
}

#[test]
fn no_rules_leave_the_plan_alone() {
    let (_d, ws) = example("hospital", 200);
    let out = infq(&ws, &["--rules=none", "optimize", &query(&ws)]);
    assert!(out.status.success());
    assert!(text(&out.stderr).contains("no rules enabled"));
    let sql = text(&out.stdout);
    assert!(!sql.contains("UNION ALL"));
    assert!(sql.contains("PREDICT(los, "));
}

#[test]
fn unknown_model_is_a_semantic_error() {
    let (_d, ws) = example("hospital", 50);
    let out = infq(&ws, &["optimize", "-e", "SELECT PREDICT(missing, age) AS p FROM patient_info"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("unknown model `missing`"));
}

#[test]
fn usage_errors_exit_with_two() {
    let (_d, ws) = example("hospital", 50);
    assert_eq!(infq(&ws, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(infq(&ws, &["--rules=bogus", "optimize", &query(&ws)]).status.code(), Some(2));
    assert_eq!(infq(&ws, &["--batch", "0", "run", &query(&ws)]).status.code(), Some(2));
}

#[test]
fn run_agrees_with_and_without_optimization() {
    let (d, ws) = example("hospital", 1000);
    let a = d.path().join("opt.csv");
    let b = d.path().join("naive.csv");
    let out = infq(&ws, &["run", &query(&ws), "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("rows in"));
    assert!(infq(&ws, &["run", "--no-opt", &query(&ws), "--out", b.to_str().unwrap()]).status.success());
    let (x, y) = (sorted_lines(&a), sorted_lines(&b));
    assert!(x.len() > 1);
    assert_eq!(x, y);
}

#[test]
fn single_row_batches_give_the_same_bag() {
    let (d, ws) = example("flights", 3000);
    let a = d.path().join("a.csv");
    let b = d.path().join("b.csv");
    assert!(infq(&ws, &["run", &query(&ws), "--out", a.to_str().unwrap()]).status.success());
    let out = infq(
        &ws,
        &["--threads=1", "--batch=1", "run", &query(&ws), "--out", b.to_str().unwrap()],
    );
    assert!(out.status.success());
    assert_eq!(sorted_lines(&a), sorted_lines(&b));
}

#[test]
fn validate_passes_on_the_running_example() {
    let (_d, ws) = example("hospital", 500);
    let out = infq(&ws, &["validate", &query(&ws), "--trials", "20"]);
    let report = text(&out.stdout);
    assert!(out.status.success(), "{report}");
    assert!(report.contains("PASS: 0 of 21 runs mismatched"), "{report}");
}

#[test]
fn validate_catches_a_corrupted_rewrite() {
    let (_d, ws) = example("hospital", 300);
    let out = infq(&ws, &["validate", &query(&ws), "--trials", "2", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    let report = text(&out.stdout);
    assert!(report.contains("FAIL"));
    assert!(report.contains("MISMATCH"));
    assert!(report.contains(" vs "), "counterexample row expected:\n{report}");
}

#[test]
fn zero_trials_check_the_workspace_data_only() {
    let (_d, ws) = example("flights", 500);
    let out = infq(&ws, &["validate", &query(&ws), "--trials", "0"]);
    assert!(out.status.success());
    assert!(text(&out.stdout).contains("0 of 1 runs"));
}

#[test]
fn bench_reports_every_batch_size() {
    let (_d, ws) = example("flights", 2000);
    let out = infq(&ws, &["bench", &query(&ws), "--batches", "1,64,2048", "--json"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let batches: Vec<u64> = doc["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["batch_size"].as_u64().unwrap())
        .collect();
    assert_eq!(batches, [1, 64, 2048]);
}

#[test]
fn cluster_compile_registers_a_dispatcher() {
    let (_d, ws) = example("flights", 5000);
    let out = infq(&ws, &["cluster-compile", "--model", "delay", "--table", "flights", "--k", "8"]);
    let report = text(&out.stdout);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(report.contains("registered delay__cluster_1 (8 clusters"), "{report}");
    let counts: Vec<(usize, usize)> = report
        .lines()
        .filter_map(|l| l.split_once(" rows, "))
        .map(|(_, rest)| {
            let mut it = rest.split_whitespace();
            let kept = it.next().unwrap().parse().unwrap();
            let total = it.nth(1).unwrap().parse().unwrap();
            (kept, total)
        })
        .collect();
    assert_eq!(counts.len(), 8);
    assert!(counts.iter().all(|(k, t)| k <= t));

    let catalog = std::fs::read_to_string(ws.join("catalog.json")).unwrap();
    assert!(catalog.contains("delay__cluster_1"));
    let sql = "SELECT dep_delay, dest, PREDICT(delay__cluster_1, dep_delay, distance, dest) AS p FROM flights";
    let (a, b) = (ws.join("a.csv"), ws.join("b.csv"));
    assert!(infq(&ws, &["run", "-e", sql, "--out", a.to_str().unwrap()]).status.success());
    assert!(infq(&ws, &["run", &query(&ws), "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(sorted_lines(&a), sorted_lines(&b));
}

#[test]
fn cluster_count_above_rows_fails() {
    let (_d, ws) = example("flights", 20);
    let out = infq(&ws, &["cluster-compile", "--model", "delay", "--table", "flights", "--k", "50"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("exceeds"));
}

#[test]
fn stats_dump_is_json() {
    let (_d, ws) = example("hospital", 100);
    let out = infq(&ws, &["stats", "blood_tests"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["blood_tests"]["row_count"], 100);
    assert_eq!(infq(&ws, &["stats", "nope"]).status.code(), Some(1));
}
