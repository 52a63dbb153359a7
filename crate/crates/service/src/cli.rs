//! `amltriage` command line.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;
use triage_core::canonical::{to_canonical_bytes, to_canonical_string};
use triage_core::eval::{read_reports, render_table1, run_experiment, write_table1, write_variant, EvalData, Variant};
use triage_core::evidence::EvidenceIndex;
use triage_core::pipeline::PipelineMode;
use triage_core::simgen::{build_case_memory, generate_world, time_split, DatasetSplit, World};

use crate::audit::verify_chain_file;
use crate::config::{ConfigFileError, ServiceConfig};
use crate::service::{read_json, write_atomic, DataDir, ServiceError, TriageService, SYSTEM_PRINCIPAL};

#[derive(Debug, Parser)]
#[command(name = "amltriage", about = "Evidence-constrained AML alert triage", version)]
pub struct Cli {
    /// TOML or JSON service configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured data directory and AMLTRIAGE_DATA_DIR.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a world and split its alerts.
    Gen {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the evidence index from the world and the training cases.
    Index,
    /// Run the pipeline on one alert or on every test alert.
    Triage {
        #[arg(long, required_unless_present = "all", conflicts_with = "all")]
        alert: Option<String>,
        #[arg(long)]
        all: bool,
        /// llm_only, rag_only or full.
        #[arg(long, default_value = "full")]
        variant: String,
    },
    /// Compute metrics for one variant, or all of them.
    Eval {
        #[arg(long, default_value = "all")]
        variant: String,
    },
    /// Write the comparison table from the stored reports.
    Report,
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Check the audit log's hash chain.
    AuditVerify {
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// What a finished command prints and its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub code: i32,
}

impl Output {
    fn json(v: &Value) -> Self {
        Self { stdout: to_canonical_string(v).expect("json"), code: 0 }
    }
}

/// Config file, then the environment, then command-line flags.
pub fn resolve_config(cli: &Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<ServiceConfig, CliError> {
    let mut config = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(env)?;
    if let Some(d) = &cli.data_dir {
        config.data_dir = d.clone();
    }
    Ok(config)
}

pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, env: &dyn Fn(&str) -> Option<String>) -> Result<Output, CliError> {
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut config = resolve_config(&cli, env)?;
    let data = DataDir(config.data_dir.clone());
    match cli.command {
        Command::Gen { seed } => {
            if let Some(s) = seed {
                config.world.seed = s;
            }
            let world = generate_world(&config.world).map_err(failed)?;
            let split = time_split(&world.alerts, config.split).map_err(failed)?;
            write_atomic(&data.world(), &serde_json::to_vec(&world).map_err(failed)?)?;
            write_atomic(&data.split(), &to_canonical_bytes(&split).map_err(failed)?)?;
            Ok(Output::json(&json!({
                "accounts": world.accounts.len(),
                "alerts": world.alerts.len(),
                "transactions": world.transactions.len(),
                "test_alerts": split.test_alert_ids.len(),
            })))
        }
        Command::Index => {
            let (world, split) = load_world(&data)?;
            let mut items = world.evidence_corpus.clone();
            items.extend(build_case_memory(&split, &world));
            let index = EvidenceIndex::build(items).map_err(failed)?;
            write_atomic(&data.index(), index.to_json().as_bytes())?;
            Ok(Output::json(&json!({"items": index.len()})))
        }
        Command::Triage { alert, variant, .. } => {
            let mode = pipeline_mode(&variant)?;
            let overrides = json!({"mode": mode});
            let service = TriageService::open(config.clone())?;
            let clearance = config.pipeline.clearance;
            match alert {
                Some(id) => {
                    let view = service.triage_alert(&id, SYSTEM_PRINCIPAL, clearance, &overrides)?;
                    service.write_snapshot()?;
                    Ok(Output::json(&serde_json::to_value(&view).map_err(failed)?))
                }
                None => triage_all(&service, mode, &overrides),
            }
        }
        Command::Eval { variant } => {
            let variants = if variant == "all" {
                Variant::ALL.to_vec()
            } else {
                vec![Variant::parse(&variant).ok_or_else(|| CliError::Usage(format!("unknown variant {variant}")))?]
            };
            let (world, split) = load_world(&data)?;
            let eval = EvalData::new(world, split).map_err(failed)?;
            let exp = config.experiment_config();
            let mut reports = vec![];
            for v in variants {
                let run = run_experiment(&eval, v, &exp).map_err(failed)?;
                write_variant(&data.reports(), &run).map_err(failed)?;
                reports.push(serde_json::to_value(&run.report).map_err(failed)?);
            }
            Ok(Output::json(&json!({"reports": reports})))
        }
        Command::Report => {
            let reports = read_reports(&data.reports()).map_err(failed)?;
            if reports.is_empty() {
                return Err(CliError::Failed("no reports; run eval first".into()));
            }
            write_table1(&data.reports(), &reports).map_err(failed)?;
            Ok(Output { stdout: render_table1(&reports), code: 0 })
        }
        Command::Serve { port } => {
            if let Some(p) = port {
                config.port = p;
            }
            serve(config)?;
            Ok(Output { stdout: String::new(), code: 0 })
        }
        Command::AuditVerify { log } => {
            let path = log.unwrap_or_else(|| data.audit());
            let check = verify_chain_file(&path).map_err(failed)?;
            let code = if check.ok { 0 } else { 1 };
            Ok(Output { code, ..Output::json(&serde_json::to_value(&check).map_err(failed)?) })
        }
    }
}

fn load_world(data: &DataDir) -> Result<(World, DatasetSplit), CliError> {
    Ok((read_json(&data.world())?, read_json(&data.split())?))
}

fn pipeline_mode(variant: &str) -> Result<PipelineMode, CliError> {
    PipelineMode::ALL
        .into_iter()
        .find(|m| m.as_str() == variant)
        .ok_or_else(|| CliError::Usage(format!("triage variant must be llm_only, rag_only or full, not {variant}")))
}

/// Triages the test split in parallel and writes one canonical final
/// record per line, in split order.
fn triage_all(service: &TriageService, mode: PipelineMode, overrides: &Value) -> Result<Output, CliError> {
    let ids = service.split().test_alert_ids.clone();
    let clearance = service.config().pipeline.clearance;
    let threads = service.config().experiment.threads;
    let results = triage_core::eval::par_map(&ids, threads, |id| service.triage_alert(id, SYSTEM_PRINCIPAL, clearance, overrides));
    let mut lines = Vec::new();
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for (id, r) in ids.iter().zip(results) {
        let line = match r {
            Ok(view) => {
                *counts.entry(view.status.clone()).or_default() += 1;
                let record = &view.state.latest.as_ref().and_then(|l| l.outcome.as_ref()).expect("triaged").final_record;
                to_canonical_bytes(record).map_err(failed)?
            }
            Err(ServiceError::Generator(e)) => {
                *counts.entry("error".into()).or_default() += 1;
                to_canonical_bytes(&json!({"alert_id": id, "error": e.to_string()})).map_err(failed)?
            }
            Err(e) => return Err(e.into()),
        };
        lines.extend(line);
        lines.push(b'\n');
    }
    let path = service.data_dir().records().join(format!("records.{}.jsonl", mode.as_str()));
    write_atomic(&path, &lines)?;
    service.write_snapshot()?;
    Ok(Output::json(&json!({"alerts": ids.len(), "records": path, "status": counts})))
}

fn serve(config: ServiceConfig) -> Result<(), CliError> {
    let port = config.port;
    let service = Arc::new(TriageService::open(config)?);
    let rt = tokio::runtime::Runtime::new().map_err(failed)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await.map_err(failed)?;
        eprintln!("listening on {}", listener.local_addr().map_err(failed)?);
        axum::serve(listener, crate::api::router(service.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(failed)
    })?;
    service.write_snapshot()?;
    Ok(())
}

