use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = r#"
schema_version = 1
seed = 4
buffer_capacity = 5

[[training]]
name = "t-compute"
profile = "compute-bound"
epochs = 8
seed = 1

[[evaluation]]
name = "e-parallel"
profile = "parallel"
epochs = 8
seed = 2

[sequence]
order = ["e-parallel"]
repetitions = 2

[policy]
epochs = 20

[rl]
pretrain_passes = 1
"#;

fn dvfsil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvfsil")).args(args).output().unwrap()
}

fn write_spec(dir: &Path) -> String {
    let p = dir.join("spec.toml");
    std::fs::write(&p, SPEC).unwrap();
    p.display().to_string()
}

#[test]
fn full_run_succeeds_and_reports_every_controller() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let out = dir.path().join("out").display().to_string();
    for cmd in ["characterize", "train-offline", "simulate"] {
        let o = dvfsil(&[cmd, "--spec", &spec, "--out", &out]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = dvfsil(&["report", "--out", &out]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(Path::new(&out).join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["controllers"].as_array().unwrap().len(), 7);
}

#[test]
fn flags_override_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let out = dir.path().join("out").display().to_string();
    let o = dvfsil(&["simulate", "--spec", &spec, "--out", &out, "--no-offline", "--controllers", "powersave,models-only", "--budget", "9", "--beta", "0.5", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = std::fs::read_to_string(Path::new(&out).join("run/spec.toml")).unwrap();
    assert!(echoed.contains("budget = 9"));
    assert!(echoed.contains("beta = 0.5"));
    assert!(echoed.contains("seed = 7"));
    assert!(Path::new(&out).join("run/logs/models-only.csv").exists());
    assert!(!Path::new(&out).join("run/logs/online-il.csv").exists());
}

#[test]
fn spec_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let o = dvfsil(&["simulate", "--spec", &spec, "--out", "x", "--controllers", "ondemand"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ondemand"));
    let o = dvfsil(&["simulate", "--spec", &spec]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(dvfsil(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml").display().to_string();
    assert_eq!(dvfsil(&["characterize", "--spec", &missing, "--out", "x"]).status.code(), Some(3));
    let spec = write_spec(dir.path());
    let out = dir.path().join("empty").display().to_string();
    assert_eq!(dvfsil(&["train-offline", "--spec", &spec, "--out", &out]).status.code(), Some(3));
    let o = dvfsil(&["report", "--out", &out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));
}
