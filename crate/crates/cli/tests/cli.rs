//! The `planfab` binary driven as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

use planfab_core::plan::{encode, NodeStatus, PlanGraph, PlanNode, TopologyKind};
use planfab_core::suite::{suite_tasks, tasks_to_jsonl};

fn planfab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planfab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn five_tasks(dir: &Path) -> String {
    let p = dir.join("tasks.jsonl");
    std::fs::write(&p, tasks_to_jsonl(&suite_tasks()[..5])).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_one_trajectory_per_task() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = five_tasks(dir.path());
    let out = dir.path().join("run");
    let o = planfab(&["run", "--paradigm", "Flash-Searcher", "--tasks", &tasks, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(out.join("trajectories")).unwrap().count(), 5);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_tasks"], 5);
    assert_eq!(summary["paradigm"], "Flash-Searcher");
}

#[test]
fn dry_run_prints_config_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nothing");
    let o = planfab(&["run", "--paradigm", "co-sight", "--dry-run", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let cfg: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg["name"], "Co-Sight");
    assert_eq!(cfg["topology_kind"], "cross_check_net");
    assert!(!out.exists());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = planfab(&["run", "--paradigm", "OWL", "--tasks", "/no/such/tasks.jsonl", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = planfab(&["run", "--paradigm", "NoSuchSystem", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = planfab(&["bench", "--paradigm", "OWL,Nope", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"paradigm": "OWL", "impedance": {"lambda1": -1}}"#).unwrap();
    let o = planfab(&["run", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = planfab(&["dataset", "--mode", "igpo", "--k", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn unreachable_backend_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = five_tasks(dir.path());
    let out = dir.path().join("o");
    let o = Command::new(env!("CARGO_BIN_EXE_planfab"))
        .args(["run", "--paradigm", "OWL", "--backend", "llm", "--tasks", &tasks, "--out", out.to_str().unwrap()])
        .env("PF_BASE_URL", "http://127.0.0.1:9")
        .env("PF_MODEL", "m")
        .env_remove("PF_API_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    // No endpoint configured is a configuration problem, not a backend one.
    let o = Command::new(env!("CARGO_BIN_EXE_planfab"))
        .args(["run", "--paradigm", "OWL", "--backend", "llm", "--tasks", &tasks, "--out", out.to_str().unwrap()])
        .env_remove("PF_BASE_URL")
        .env("PF_MODEL", "m")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_rows_are_deterministic_and_match_run() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = five_tasks(dir.path());
    let b1 = dir.path().join("b1");
    let b2 = dir.path().join("b2");
    let o1 = planfab(&["bench", "--tasks", &tasks, "--seed", "4", "--out", b1.to_str().unwrap()]);
    let o2 = planfab(&["bench", "--tasks", &tasks, "--seed", "4", "--jobs", "1", "--out", b2.to_str().unwrap()]);
    assert!(o1.status.success());
    assert_eq!(o1.stdout, o2.stdout);
    assert_eq!(stdout(&o1).lines().count(), 8);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(b1.join("bench.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 7);

    let r = dir.path().join("r");
    let o = planfab(&["run", "--paradigm", "JoyAgent", "--tasks", &tasks, "--seed", "4", "--out", r.to_str().unwrap()]);
    assert!(o.status.success());
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    let joy = rows.iter().find(|row| row["paradigm"] == "JoyAgent").unwrap();
    assert_eq!(&run, joy);
}

#[test]
fn dataset_accounting_on_three_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tasks.jsonl");
    std::fs::write(&p, tasks_to_jsonl(&suite_tasks()[..3])).unwrap();
    let out = dir.path().join("d");
    let o = planfab(&["dataset", "--mode", "sft", "--k", "4", "--tasks", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["n_tasks"], 3);
    assert!(s["n_candidates"].as_u64().unwrap() <= 12);
    let lines = std::fs::read_to_string(out.join("sft.jsonl")).unwrap().lines().count() as u64;
    assert_eq!(lines, s["n_sft"].as_u64().unwrap());
}

#[test]
fn dataset_with_no_successes_writes_an_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tasks.jsonl");
    // No reference plan, so every candidate fails to initialize.
    std::fs::write(&p, "{\"id\":\"x\",\"query\":\"Who wrote the unknown book?\",\"gold\":\"nobody\"}\n").unwrap();
    let out = dir.path().join("d");
    let o = planfab(&["dataset", "--mode", "sft", "--tasks", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(out.join("sft.jsonl")).unwrap(), "");
}

#[test]
fn export_dot_counts() {
    let dir = tempfile::tempdir().unwrap();
    let g = PlanGraph::new(TopologyKind::Dag)
        .with_node(PlanNode::task("A", "a"))
        .with_node(PlanNode::task("B", "b"))
        .with_node(PlanNode::task("C", "c"))
        .with_node(PlanNode::task("D", "d"))
        .with_edge("A", "B")
        .with_edge("A", "C")
        .with_edge("B", "D")
        .with_edge("C", "D");
    let p = dir.path().join("diamond.json");
    std::fs::write(&p, encode(&g)).unwrap();
    let o = planfab(&["export-dot", "--input", p.to_str().unwrap()]);
    assert!(o.status.success());
    let dot = stdout(&o);
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 4);
    assert_eq!(dot.lines().filter(|l| l.contains("[label=") && !l.contains("->")).count(), 4);

    // U stays (its other successor is in flight); V is excised, so U -> Z is rewired.
    let mut r = PlanGraph::new(TopologyKind::Dag)
        .with_node(PlanNode::task("U", "u").with_status(NodeStatus::Succeeded))
        .with_node(PlanNode::task("W", "w"))
        .with_node(PlanNode::task("V", "v").with_status(NodeStatus::Succeeded))
        .with_node(PlanNode::task("Z", "z"))
        .with_edge("U", "W")
        .with_edge("U", "V")
        .with_edge("V", "Z");
    r.node_mut(&"W".into()).unwrap().status = NodeStatus::Dispatched;
    let pruned = planfab_core::topology::prune_completed(&r);
    std::fs::write(&p, encode(&pruned)).unwrap();
    let dot = stdout(&planfab(&["export-dot", "--input", p.to_str().unwrap()]));
    assert!(dot.lines().any(|l| l.contains("\"U\" -> \"Z\"") && l.contains("dashed")), "{dot}");

    std::fs::write(&p, "not a graph").unwrap();
    assert_eq!(planfab(&["export-dot", "--input", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn run_output_feeds_export_and_impedance() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = five_tasks(dir.path());
    let out = dir.path().join("run");
    assert!(planfab(&["run", "--paradigm", "OWL", "--tasks", &tasks, "--out", out.to_str().unwrap()]).status.success());
    let traj = out.join("trajectories").join("t01.jsonl");
    let o = planfab(&["export-dot", "--input", traj.to_str().unwrap(), "--initial"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("digraph"));
    let o = planfab(&["impedance", "--trajectory", traj.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["breakdown"]["impedance"].as_f64().unwrap() >= v["breakdown"]["c_tot"].as_f64().unwrap());
    assert!(v["objective"].is_number());
}

#[test]
fn registry_and_verify_math() {
    let o = planfab(&["registry"]);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 7);
    let o = planfab(&["verify-math", "--instances", "5"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}
