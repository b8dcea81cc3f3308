use std::process::{Command, Output};

const FOUR_HOP: &str = r#"{"eps":[0.5,0.4999,0.4998,0.4],"buffers":[5,5,5]}"#;

fn linenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linenet")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

#[test]
fn rbie_report_has_config_and_capacity() {
    let v = json(&linenet(&["--spec", FOUR_HOP, "rbie"]));
    assert_eq!(v["command"], "rbie");
    assert_eq!(v["config"]["spec"]["buffers"], serde_json::json!([5, 5, 5]));
    let c = v["result"]["capacity"].as_f64().unwrap();
    assert!((c - 0.43484).abs() < 2e-5, "{c}");
}

#[test]
fn exact_matches_state_count() {
    let v = json(&linenet(&["--spec", FOUR_HOP, "exact"]));
    assert_eq!(v["result"]["states"], 216);
}

#[test]
fn csv_output_starts_with_comment_preamble() {
    let out = linenet(&["--spec", FOUR_HOP, "--format", "csv", "bounds"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# "), "{text}");
}

#[test]
fn simulation_is_reproducible_from_seed() {
    let args = ["--spec", FOUR_HOP, "--seed", "7", "--epochs", "50000", "simulate"];
    let a = json(&linenet(&args));
    let b = json(&linenet(&args));
    assert_eq!(a["result"], b["result"]);
}

#[test]
fn invalid_spec_exits_with_usage_code() {
    let out = linenet(&["--spec", r#"{"eps":[1.5,0.2],"buffers":[2]}"#, "rbie"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn state_cap_exceeded_exits_with_code_4() {
    let out = linenet(&["--spec", r#"{"eps":[0.2,0.2,0.2,0.2,0.2],"buffers":[40,40,40,40]}"#, "exact", "--state-cap", "1000"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn report_written_to_file() {
    let dir = std::env::temp_dir().join(format!("linenet-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("rbie.json");
    let out = linenet(&["--spec", FOUR_HOP, "--out", path.to_str().unwrap(), "rbie"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["tool"], "linenet");
    std::fs::remove_dir_all(&dir).ok();
}
