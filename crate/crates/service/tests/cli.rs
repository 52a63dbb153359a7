mod common;

use std::process::Command;

use common::*;
use serde_json::Value;
use triage_service::cli::{run, CliError};
use triage_service::config::{ENV_DATA_DIR, ENV_PORT};
use triage_service::ServiceConfig;

#[test]
fn gen_index_triage_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { data_dir: dir.path().join("data"), ..small_config(5) };
    let path = write_config(dir.path(), &config);
    let gen: Value = serde_json::from_str(&cli(&path, &["gen"])).unwrap();
    assert!(gen["test_alerts"].as_u64().unwrap() > 0);
    let idx: Value = serde_json::from_str(&cli(&path, &["index"])).unwrap();
    assert!(idx["items"].as_u64().unwrap() > 0);

    let out: Value = serde_json::from_str(&cli(&path, &["triage", "--all", "--variant", "rag_only"])).unwrap();
    let records = std::fs::read_to_string(config.data_dir.join("records/records.rag_only.jsonl")).unwrap();
    assert_eq!(records.lines().count() as u64, out["alerts"].as_u64().unwrap());
    assert!(config.data_dir.join("snapshot.json").exists());

    let id = records.lines().next().map(|l| serde_json::from_str::<Value>(l).unwrap()["alert_id"].clone()).unwrap();
    let one: Value = serde_json::from_str(&cli(&path, &["triage", "--alert", id.as_str().unwrap()])).unwrap();
    assert_eq!(one["alert_id"], id);

    cli(&path, &["eval", "--variant", "rule_baseline"]);
    cli(&path, &["eval", "--variant", "llm_only"]);
    let table = cli(&path, &["report"]);
    assert!(table.contains("rule_baseline") && table.contains("llm_only"), "{table}");
    assert!(config.data_dir.join("reports/table1.md").exists());

    let check: Value = serde_json::from_str(&cli(&path, &["audit-verify"])).unwrap();
    assert_eq!(check["ok"], Value::Bool(true));
    assert!(check["events"].as_u64().unwrap() > 0);
}

#[test]
fn usage_errors() {
    let bad = |args: &[&str]| run(args.iter().copied(), &no_env).unwrap_err();
    assert!(matches!(bad(&["amltriage", "triage"]), CliError::Usage(_)));
    assert!(matches!(bad(&["amltriage", "triage", "--alert", "a", "--all"]), CliError::Usage(_)));
    assert!(matches!(bad(&["amltriage", "frobnicate"]), CliError::Usage(_)));
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(matches!(bad(&["amltriage", "--data-dir", d, "triage", "--all", "--variant", "rule_baseline"]), CliError::Usage(_)));
    assert!(matches!(bad(&["amltriage", "--data-dir", d, "eval", "--variant", "nope"]), CliError::Usage(_)));
    assert!(matches!(bad(&["amltriage", "--data-dir", d, "index"]), CliError::Service(_)));
    assert!(matches!(bad(&["amltriage", "--data-dir", d, "report"]), CliError::Failed(_)));
    let missing = dir.path().join("nope.toml");
    assert!(matches!(bad(&["amltriage", "--config", missing.to_str().unwrap(), "index"]), CliError::Config(_)));
}

#[test]
fn flags_override_environment_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let file_dir = dir.path().join("from-file");
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let path = write_config(dir.path(), &ServiceConfig { data_dir: file_dir.clone(), ..small_config(5) });
    let env_dir_s = env_dir.to_str().unwrap().to_string();
    let env = move |k: &str| (k == ENV_DATA_DIR).then(|| env_dir_s.clone());
    let argv = |extra: &[&str]| {
        let mut v = vec!["amltriage".to_string(), "--config".into(), path.to_str().unwrap().into()];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    run(argv(&["gen"]), &env).unwrap();
    assert!(env_dir.join("world.json").exists() && !file_dir.exists());
    run(argv(&["--data-dir", flag_dir.to_str().unwrap(), "gen", "--seed", "9"]), &env).unwrap();
    assert!(flag_dir.join("world.json").exists());
    let bad_port = |k: &str| (k == ENV_PORT).then(|| "http".to_string());
    assert!(matches!(run(argv(&["gen"]), &bad_port), Err(CliError::Config(_))));
}

#[test]
fn audit_verify_reports_the_first_broken_event() {
    let (dir, config) = prepared(small_config(5));
    let path = write_config(dir.path(), &config);
    let s = open(&config);
    for id in s.split().test_alert_ids.iter().take(2) {
        s.triage_alert(id, "ana", triage_core::AclTag::Restricted, &serde_json::json!({})).unwrap();
    }
    drop(s);
    let log = config.data_dir.join("audit.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"principal\":\"ana\"", "\"principal\":\"eve\"", 2);
    std::fs::write(&log, tampered).unwrap();
    let out = run(["amltriage", "--config", path.to_str().unwrap(), "audit-verify"], &no_env).unwrap();
    assert_eq!(out.code, 1);
    let check: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!((check["ok"].clone(), check["broken_at"].clone()), (Value::Bool(false), Value::from(1)));
}

#[test]
fn binary_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &ServiceConfig { data_dir: dir.path().join("data"), ..small_config(5) });
    let bin = env!("CARGO_BIN_EXE_amltriage");
    let run = |args: &[&str]| Command::new(bin).arg("--config").arg(&path).args(args).output().unwrap();
    let out = run(&["gen"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["alerts"].as_u64().unwrap() > 0);
    let out = run(&["audit-verify"]);
    assert_eq!(out.status.code(), Some(1), "no log yet");
    let out = run(&["triage"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["report"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}
