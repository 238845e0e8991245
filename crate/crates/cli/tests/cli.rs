use std::process::{Command, Output};

use fogopt::harness::{read_csv, read_json, Method, RunStatus};
use fogopt::model::SystemInstance;

fn fogopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fogopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let p = path.to_str().unwrap();
    stdout(&fogopt(&[
        "gen",
        "--scenario",
        "2",
        "--seed",
        "3",
        "--tasks",
        "3",
        "--fog",
        "1",
        "--experiment",
        "5",
        "--out",
        p,
    ]));
    let inst = SystemInstance::load(&path).unwrap();
    assert_eq!((inst.n_tasks(), inst.n_fog()), (3, 1));

    let text = stdout(&fogopt(&["solve", "--instance", p, "--method", "ibba-lfc"]));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["method"], "IBBA-LFC");
    assert_eq!(v["status"], "feasible");
    assert_eq!(v["error_rate"], 0.0);
    assert_eq!(v["placements"].as_array().unwrap().len(), 3);
}

#[test]
fn gen_to_stdout_is_an_instance() {
    let text = stdout(&fogopt(&["gen", "--seed", "1"]));
    let inst = SystemInstance::from_json_str(&text).unwrap();
    assert_eq!((inst.n_tasks(), inst.n_fog()), (10, 4));
}

#[test]
fn bench_writes_one_row_per_method_and_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    stdout(&fogopt(&[
        "bench",
        "--scenario",
        "2",
        "--seed",
        "2",
        "--tasks",
        "3",
        "--fog",
        "1",
        "--methods",
        "FFBD-F,IBBA-LFC,WOP",
        "--reps",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]));
    let rows = read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 9 * 3);
    assert_eq!(rows[1].method, Method::IbbaLfc);
    let first_feasible = rows
        .iter()
        .find(|r| r.status == RunStatus::Feasible)
        .unwrap();
    assert!(first_feasible.mean_energy.is_some());
}

#[test]
fn bench_json_to_stdout() {
    let text = stdout(&fogopt(&[
        "bench",
        "--seed",
        "4",
        "--tasks",
        "2",
        "--fog",
        "1",
        "--methods",
        "FFBD-S",
        "--format",
        "json",
    ]));
    let rows = read_json(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.error_rate == 0.0));
}

#[test]
fn compare_prints_a_table() {
    let text = stdout(&fogopt(&[
        "compare",
        "--scenario",
        "1",
        "--seed",
        "0",
        "--tasks",
        "2",
        "--fog",
        "1",
        "--methods",
        "FFBD-F,ORACLE",
    ]));
    assert!(text.lines().next().unwrap().contains("energy/task"));
    assert_eq!(text.lines().count(), 1 + 10 * 2);
}

#[test]
fn bad_arguments_fail() {
    let out = fogopt(&["solve", "--instance", "missing.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    assert!(!fogopt(&["bench", "--methods", "simplex"]).status.success());
    assert!(!fogopt(&["bench", "--scenario", "3"]).status.success());
    assert!(!fogopt(&["gen", "--experiment", "99"]).status.success());
}
