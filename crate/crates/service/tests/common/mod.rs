#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use tempfile::TempDir;
use triage_core::simgen::WorldConfig;
use triage_core::{AlertContext, AlertType, Indicator};
use triage_service::audit::Clock;
use triage_service::cli;
use triage_service::{ServiceConfig, TriageService};

pub fn small_world(seed: u64) -> WorldConfig {
    WorldConfig {
        seed,
        n_accounts: 60,
        n_days: 60,
        typology_counts: AlertType::ALL.into_iter().map(|t| (t, 6)).collect(),
        ..Default::default()
    }
}

pub fn no_env(_: &str) -> Option<String> {
    None
}

pub fn write_config(dir: &Path, config: &ServiceConfig) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_vec(config).unwrap()).unwrap();
    p
}

/// Runs a CLI command in-process and returns its stdout.
pub fn cli(config_path: &Path, args: &[&str]) -> String {
    let mut argv = vec!["amltriage", "--config", config_path.to_str().unwrap()];
    argv.extend_from_slice(args);
    let out = cli::run(argv, &no_env).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    assert_eq!(out.code, 0, "{args:?}: {}", out.stdout);
    out.stdout
}

/// A data directory with a generated world and a built index.
pub fn prepared(config: ServiceConfig) -> (TempDir, ServiceConfig) {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { data_dir: dir.path().join("data"), ..config };
    let path = write_config(dir.path(), &config);
    cli(&path, &["gen"]);
    cli(&path, &["index"]);
    (dir, config)
}

pub fn small_config(seed: u64) -> ServiceConfig {
    ServiceConfig { world: small_world(seed), split: (0.6, 0.2, 0.2), ..Default::default() }
}

pub fn fixed_clock() -> Clock {
    Arc::new(|| "2026-01-01T00:00:00.000Z".to_string())
}

pub fn open(config: &ServiceConfig) -> TriageService {
    TriageService::open_with_clock(config.clone(), fixed_clock()).unwrap()
}

pub fn contexts(service: &TriageService) -> Vec<AlertContext> {
    let idx = service.world().index();
    service.world().alerts.iter().map(|a| idx.context(&a.id).unwrap()).collect()
}

/// An alert whose only indicators are structuring and prior alerts.
pub fn structuring_escalation(service: &TriageService) -> String {
    contexts(service)
        .into_iter()
        .find(|c| c.active_indicators() == vec![Indicator::StructuringPattern, Indicator::PriorAlerts])
        .expect("structuring escalation")
        .alert
        .id
}
