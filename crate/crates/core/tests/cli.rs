mod common;

use std::process::{Command, Output};

use common::program_path;

fn scv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scv")).args(args).output().expect("binary runs")
}

fn run_on(name: &str, extra: &[&str]) -> Output {
    let path = program_path(name);
    let mut args = vec![path.to_str().unwrap()];
    args.extend_from_slice(extra);
    scv(&args)
}

#[test]
fn verified_programs_exit_0() {
    let out = run_on("e2o", &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("VERIFIED"));
}

#[test]
fn blamed_programs_exit_1_and_show_a_witness() {
    let out = run_on("bad", &[]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("BLAMED"), "{text}");
}

#[test]
fn running_out_of_budget_exits_2() {
    let out = run_on("fact", &["--no-summarize", "--budget", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("UNKNOWN"));
}

#[test]
fn summarization_settles_fact() {
    assert_eq!(run_on("fact", &[]).status.code(), Some(0));
}

#[test]
fn missing_files_and_bad_flags_exit_3() {
    assert_eq!(scv(&["/nonexistent/nothing.scv"]).status.code(), Some(3));
    assert_eq!(run_on("e2o", &["--budget", "lots"]).status.code(), Some(3));
}

#[test]
fn json_reports_are_reproducible() {
    let a = run_on("smt", &["--json"]);
    let b = run_on("smt", &["--json"]);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).expect("valid JSON");
    let modules = v["modules"].as_array().unwrap();
    assert!(modules.iter().all(|m| m["module"].is_string() && m["status"].is_string()));
    assert!(v["checks"]["total"].is_u64());
}

#[test]
fn the_solver_can_be_switched_off() {
    let status_of_main = |extra: &[&str]| {
        let out = run_on("smt", &[&["--json"], extra].concat());
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let m = v["modules"].as_array().unwrap().iter().find(|m| m["module"] == "main").unwrap().clone();
        m["status"].as_str().unwrap().to_string()
    };
    assert_eq!(status_of_main(&[]), "verified");
    assert_eq!(status_of_main(&["--solver", "none"]), "blamed");
}

#[test]
fn run_uses_the_concrete_interpreter() {
    let dir = std::env::temp_dir().join(format!("scv-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("p.scv");
    std::fs::write(&f, "(module f (-> int? int?) (lambda (x) (* x x))) (top (f 7))").unwrap();
    let out = scv(&["run", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "49");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn the_soundness_command_reports_no_violations() {
    let out = scv(&["soundness", "--seed", "3", "--count", "50", "--solver", "none"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 violations"));
}
