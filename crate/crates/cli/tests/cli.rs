//! Exit codes, file formats and determinism of the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privdude::format::InstanceFile;
use privdude::problems::knapsack::KnapsackInstance;
use privdude::problems::Instance;

fn privdude(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privdude")).args(args).output().unwrap()
}

fn privdude_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privdude")).env("PRIVDUDE_THREADS", threads).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_knapsack(dir: &Path) -> PathBuf {
    let inst = KnapsackInstance::new(vec![1.0, 0.8, 0.5], vec![vec![1.0]; 3], vec![2.0]).unwrap();
    let mut file = InstanceFile::from_instance(&Instance::Knapsack(inst), None);
    file.metadata.tau = 1.0;
    file.metadata.width = 3.0;
    let path = dir.join("tiny.json");
    fs::write(&path, file.to_json()).unwrap();
    path
}

#[test]
fn generate_round_trips_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = privdude(&["generate", "--kind", "knapsack", "--n", "3", "--k", "1", "--seed", "7", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("\"sigma\""));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let file = InstanceFile::from_json(&text).unwrap();
    assert_eq!(file.to_json(), text);
    assert_eq!((file.n, file.k, file.seed), (3, 1, Some(7)));
    assert_eq!(file.program().unwrap().b, file.b);
}

#[test]
fn unsupported_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = privdude(&["generate", "--kind", "auction", "--n", "3", "--k", "1", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported problem kind"));
}

#[test]
fn bad_flags_exit_with_one() {
    assert_eq!(code(&privdude(&["solve"])), 1);
    assert_eq!(code(&privdude(&["frobnicate"])), 1);
    assert_eq!(code(&privdude(&["--help"])), 0);
}

#[test]
fn io_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = privdude(&["solve", "--in", s(&dir.path().join("missing.json")), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 2);
    let o = privdude(&[
        "generate",
        "--kind",
        "knapsack",
        "--n",
        "3",
        "--k",
        "1",
        "--out",
        s(&dir.path().join("no/such/dir.json")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_instance_is_a_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"kind\": \"knapsack\"").unwrap();
    let o = privdude(&["solve", "--in", s(&path), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn tiny_knapsack_report_passes_its_audit() {
    let dir = tempfile::tempdir().unwrap();
    let inst = tiny_knapsack(dir.path());
    let out = dir.path().join("r.json");
    let o = privdude(&["solve", "--in", s(&inst), "--algo", "privdude", "--no-noise", "--T", "2000", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let verdict = &report["audit"]["solver"];
    for key in ["structure_ok", "violation_ok", "objective_ok", "lambda_in_box", "billboard_ok"] {
        assert_eq!(verdict[key], true, "{key}");
    }
    assert_eq!(report["audit"]["opt"]["value"], 1.8);
    let objective = report["audit"]["output"]["objective"].as_f64().unwrap();
    assert!((1.75..=1.85).contains(&objective));
    assert_eq!(report["x_bar"].as_array().unwrap().len(), 3);
    assert!(report.get("timings").is_none());
}

#[test]
fn every_algorithm_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("dd.json");
    let o = privdude(&["generate", "--kind", "ddemand", "--n", "6", "--k", "3", "--seed", "1", "--out", s(&inst)]);
    assert_eq!(code(&o), 0);
    for algo in ["privdude", "truedude", "baseline"] {
        let out = dir.path().join(format!("{algo}.json"));
        let o = privdude(&["solve", "--in", s(&inst), "--algo", algo, "--alpha", "0.1", "--T", "50", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{algo}: {}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["algo"], algo);
        assert_eq!(report.get("payments").is_some(), algo == "truedude");
    }
    // The capacities are far below the flag margin at this budget.
    let o = privdude(&[
        "solve",
        "--in",
        s(&inst),
        "--algo",
        "rounddude",
        "--T",
        "50",
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("flag margin"));
    let o = privdude(&[
        "solve",
        "--in",
        s(&inst),
        "--algo",
        "truedude",
        "--T",
        "50",
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&o), 1, "missing alpha");
}

#[test]
fn flow_with_truedude_needs_null_actions() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("flow.json");
    assert_eq!(code(&privdude(&["generate", "--kind", "flow", "--n", "3", "--k", "2", "--out", s(&inst)])), 0);
    let o = privdude(&[
        "solve",
        "--in",
        s(&inst),
        "--algo",
        "truedude",
        "--alpha",
        "0.1",
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("null action required"));
}

#[test]
fn infeasible_tight_output_exits_with_three() {
    // Declared metadata that lies about the class (σ = 0, C_inf = 0) shrinks
    // the reserve to √(3b). Two rounds leave every agent short of its best
    // response by more than α, repair sends all six to take their item, and
    // the final check against b = 3.5 fails.
    let dir = tempfile::tempdir().unwrap();
    let inst = KnapsackInstance::new(vec![1.0; 6], vec![vec![1.0]; 6], vec![4.0]).unwrap();
    let mut file = InstanceFile::from_instance(&Instance::Knapsack(inst), None);
    file.metadata.sigma = 0.0;
    file.metadata.contribution_bound = 0.0;
    file.b = vec![3.5];
    let path = dir.path().join("liar.json");
    fs::write(&path, file.to_json()).unwrap();
    let o = privdude(&[
        "solve",
        "--in",
        s(&path),
        "--algo",
        "tightdude",
        "--alpha",
        "0.1",
        "--no-noise",
        "--T",
        "2",
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let inst = tiny_knapsack(dir.path());
    let csv = dir.path().join("s.csv");
    let o = privdude(&["sweep", "--in", s(&inst), "--epsilons", "1", "--trials", "1", "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,seed,objective,opt,gap,violation,rp_bound,satisfied_frac");
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), 8);

    let o = privdude(&["sweep", "--in", s(&inst), "--epsilons", "0.5,2,8", "--trials", "3", "--out", s(&csv)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 10);

    for bad in ["", "1,,2", "abc", "-1", "0"] {
        let o = privdude(&["sweep", "--in", s(&inst), "--epsilons", bad, "--out", s(&csv)]);
        assert_eq!(code(&o), 1, "{bad:?}");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("k.json");
    assert_eq!(
        code(&privdude(&["generate", "--kind", "knapsack", "--n", "80", "--k", "2", "--seed", "3", "--out", s(&inst)])),
        0
    );
    let mut reports = Vec::new();
    for threads in ["1", "4", "1"] {
        let out = dir.path().join(format!("r{}.json", reports.len()));
        let o = privdude_threads(threads, &["solve", "--in", s(&inst), "--T", "100", "--seed", "9", "--out", s(&out)]);
        assert_eq!(code(&o), 0);
        reports.push((fs::read(&out).unwrap(), o.stdout));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn bad_thread_setting_is_rejected() {
    let o = privdude_threads("zero", &["sweep", "--in", "x", "--epsilons", "1", "--out", "y"]);
    assert_eq!(code(&o), 1);
}
