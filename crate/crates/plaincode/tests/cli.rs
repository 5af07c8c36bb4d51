use std::path::Path;
use std::process::{Command, Output};

use plaincode::PlanDb;
use plaincode_core::ActionKind;
use plaincode_lang::fixtures::ZOO;

const MAIN: &str = r#"
public class Main {
    public static void main() {
        Habitat h = new Habitat("42, 42");
        h.grow(42);
        double a = h.scaled(2.0, 0.5);
        Monkey m = new Monkey(3, EyeColor.BROWN, h);
        int later = m.ageIn(4);
    }
}
"#;

fn plaincode(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plaincode"));
    cmd.current_dir(dir).args(args);
    for var in ["PLAINCODE_CONFIG", "PLAINCODE_PLAN_DB", "PLAINCODE_TRACE", "PLAINCODE_OUT", "PLAINCODE_SEED"] {
        cmd.env_remove(var);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn app() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("zoo.mj"), ZOO).unwrap();
    std::fs::write(dir.path().join("main.mj"), MAIN).unwrap();
    std::fs::write(dir.path().join("plaincode.toml"), "sources = [\"zoo.mj\", \"main.mj\"]\n").unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_writes_the_monkey_plan() {
    let dir = app();
    let out = plaincode(dir.path(), &["--config", "plaincode.toml", "analyze", "--out", "plans.jsonl"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let db = PlanDb::parse(&std::fs::read_to_string(dir.path().join("plans.jsonl")).unwrap()).unwrap();
    let plan = &db.plans["Monkey"];
    assert_eq!(plan.actions.len(), 1);
    assert_eq!(plan.actions[0].kind, ActionKind::CallConstructor);
    assert!(db.infeasible.contains_key("Habitat"));
}

#[test]
fn full_pipeline_then_verify() {
    let dir = app();
    let env = [("PLAINCODE_CONFIG", "plaincode.toml"), ("PLAINCODE_PLAN_DB", "plans.jsonl"), ("PLAINCODE_TRACE", "trace.jsonl")];
    for args in [&["analyze", "--out", "plans.jsonl"][..], &["record"], &["generate", "--out", "tests"], &["verify", "--out", "tests"]] {
        let out = plaincode(dir.path(), args, &env);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tests/report.json")).unwrap()).unwrap();
    assert_eq!(report["emitted"], 2, "{report}");
    assert!(dir.path().join("tests/HabitatTest.mj").exists());
}

#[test]
fn empty_trace_generates_nothing_and_succeeds() {
    let dir = app();
    let out = plaincode(dir.path(), &["--config", "plaincode.toml", "analyze", "--out", "plans.jsonl"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let header = plaincode_core::wire::encode_header(plaincode_core::wire::TRACE_FORMAT);
    std::fs::write(dir.path().join("empty.jsonl"), header + "\n").unwrap();
    let out = plaincode(dir.path(), &["--plan-db", "plans.jsonl", "--trace", "empty.jsonl", "--out", "tests", "generate"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("tests/report.json")).unwrap();
    assert!(report.contains("\"unique\": 0"), "{report}");
}

#[test]
fn missing_inputs_are_usage_errors() {
    let dir = app();
    let out = plaincode(dir.path(), &["--config", "missing.toml", "analyze", "--out", "plans.jsonl"], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = plaincode(dir.path(), &["generate"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--trace"), "{}", stderr(&out));
    let out = plaincode(dir.path(), &["--plan-db", "nope.jsonl", "--trace", "t.jsonl", "--out", "o", "generate"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_trace_fails() {
    let dir = app();
    plaincode(dir.path(), &["--config", "plaincode.toml", "analyze", "--out", "plans.jsonl"], &[]);
    std::fs::write(dir.path().join("bad.jsonl"), "not json\n").unwrap();
    let out = plaincode(dir.path(), &["--plan-db", "plans.jsonl", "--trace", "bad.jsonl", "--out", "tests", "generate"], &[]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn environment_overrides_flags_defaults() {
    let dir = app();
    let env = [("PLAINCODE_SEED", "42"), ("PLAINCODE_SIZE", "12"), ("PLAINCODE_OUT", "corpus")];
    let out = plaincode(dir.path(), &["verify"], &env);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("12 objects: 12 equal"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("corpus/roundtrip.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
}
