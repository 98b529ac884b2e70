use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlcbf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn reach_avoid() -> String {
    scenario("paper_sec4.json").display().to_string()
}

fn simulate_into(dir: &Path, config: &str) -> Output {
    run(&["--config", config, "--out", dir.to_str().unwrap(), "simulate"])
}

#[test]
fn missing_config_exits_2() {
    let o = run(&["--config", "/nonexistent/scenario.json", "synth"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["synth"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_formula_exits_2() {
    let o = run(&["--config", &reach_avoid(), "parse", "--formula", "G[0,1 mu1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_prints_the_coefficient_table() {
    let o = run(&["--config", &reach_avoid(), "synth", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for a in ["1.40", "0.70", "1.67", "1.69", "2.00", "1.50"] {
        assert!(out.contains(a), "missing {a}");
    }
    assert!(out.contains("REPORT: nodes=18 horizon=24"));
}

#[test]
fn tree_of_a_single_predicate() {
    let o = run(&["--config", &reach_avoid(), "tree", "--formula", "mu1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("REPORT: nodes=1 horizon=0"));
}

#[test]
fn transform_reports_the_until_rule() {
    let o = run(&["--config", &reach_avoid(), "transform", "--formula", "mu1 U[0,2] mu2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("rule-1 until"));
    assert!(out.contains("REPORT: desired=G[0,2] mu1 & F[0,2] mu2"));
}

#[test]
fn simulate_then_monitor_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate_into(dir.path(), &reach_avoid());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("satisfied=true"));
    assert!(out.contains("guard_clamps=0"));
    let csv = dir.path().join("paper_sec4.csv");
    let csv = csv.to_str().unwrap();
    assert!(dir.path().join("paper_sec4.svg").exists());

    let o = run(&["--config", &reach_avoid(), "monitor", "--csv", csv]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("REPORT: satisfied=true"));
    let o = run(&["--config", &reach_avoid(), "monitor", "--csv", csv, "--formula", "G[0,24] mu4"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("REPORT: satisfied=false"));

    let svg = dir.path().join("replot.svg");
    let o = run(&["--config", &reach_avoid(), "plot", "--csv", csv, "--svg", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn monitor_rejects_an_empty_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["--config", &reach_avoid(), "monitor", "--csv", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&empty, "t,x0,x1\n").unwrap();
    let o = run(&["--config", &reach_avoid(), "monitor", "--csv", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn emitted_config_reproduces_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--config", &reach_avoid(), "simulate", "--emit-config"]);
    assert_eq!(o.status.code(), Some(0));
    let emitted = dir.path().join("effective.json");
    std::fs::write(&emitted, &o.stdout).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(simulate_into(&a, &reach_avoid()).status.code(), Some(0));
    assert_eq!(simulate_into(&b, emitted.to_str().unwrap()).status.code(), Some(0));
    let read = |d: &Path| std::fs::read(d.join("paper_sec4.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn batch_reports_every_scenario_and_the_worst_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let tight = scenario("tight_bounds.json").display().to_string();
    let o = run(&["--out", dir.path().to_str().unwrap(), "--seed", "7", "simulate", "--batch", &reach_avoid(), &tight]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    assert!(out.contains("REPORT: seed=7"));
    assert!(out.contains("scenario=paper_sec4 satisfied=true"));
    assert!(out.contains("scenario=tight_bounds satisfied=false robustness=-"));
    assert!(dir.path().join("tight_bounds.csv").exists());
}

#[test]
fn dt_flag_overrides_the_step() {
    let o = run(&["--config", &reach_avoid(), "--dt", "0.01", "simulate", "--emit-config"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"dt\": 0.01"));
    let o = run(&["--config", &reach_avoid(), "--dt", "-1", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}
