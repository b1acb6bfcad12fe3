use discrepancy::eval::{prepare_inputs, RunConfig};
use discrepancy::milp::build_milp;
use discrepancy::solver::{solve, SolverConfig};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/running_example").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_discrepancy")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn explain_prints_the_value_change() {
    let b = fixture("bundle_q1_q2.json");
    let o = run(&["explain", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("Q1 = 7, Q2 = 6"), "{text}");
    assert!(text.contains("value changes (1)"), "{text}");
}

#[test]
fn json_report_parses() {
    let b = fixture("bundle_q1_q3.json");
    let o = run(&["explain", b.to_str().unwrap(), "--json", "--method", "greedy"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["method"], "greedy");
    assert_eq!(v["explanation"]["delta"][0]["row_id"], "design");
}

#[test]
fn exit_codes() {
    let o = run(&["explain", fixture("bundle_q1_q4.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["explain", fixture("no_such_bundle.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["explain", fixture("bundle_q1_q2.json").to_str().unwrap(), "--alpha", "0.4"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["explain", fixture("bundle_q1_q2.json").to_str().unwrap(), "--method", "magic"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synthgen_then_explain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pair");
    let o = run(&["synthgen", "--n", "80", "--d", "0.2", "--v", "200", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("report.json");
    let b = out.join("bundle.json");
    let o = run(&["explain", b.to_str().unwrap(), "--batch-size", "50", "--output", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["metrics"]["explanation"]["f"].as_f64().unwrap() > 0.9);
    assert!(v["blocks"].as_u64().unwrap() >= 2);
}

#[test]
fn export_and_reimport() {
    let dir = tempfile::tempdir().unwrap();
    let b = fixture("bundle_q1_q2.json");
    for ext in ["lp", "mps"] {
        let model = dir.path().join(format!("model.{ext}"));
        let o = run(&["explain", b.to_str().unwrap(), "--solver", "export", "--model-out", model.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(std::fs::metadata(&model).unwrap().len() > 0);
    }
    // stand in for an external solver
    let cfg = RunConfig::load(&b).unwrap();
    let prep = prepare_inputs(&cfg.load_inputs().unwrap(), &cfg.options).unwrap();
    let mm = build_milp(&prep.instance, &cfg.options.priors, &cfg.options.milp).unwrap();
    let a = solve(&mm.model, &SolverConfig::default()).unwrap();
    let sol = dir.path().join("model.sol");
    std::fs::write(&sol, a.to_solution_text(&mm.model)).unwrap();
    let o = run(&["explain", b.to_str().unwrap(), "--solver", "export", "--solution", sol.to_str().unwrap(), "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value_changes"].as_array().unwrap().len(), 1);
    assert_eq!(v["evidence"].as_array().unwrap().len(), 6);
}

#[test]
fn bench_emits_csv_rows() {
    let o = run(&["bench", "--n", "40", "--v", "100", "--seeds", "2", "--methods", "noopt,batch-20,greedy"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,n,d,v,seed,expF,evF,solve_ms");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("noopt,40,0.2,100,0,"));
}
