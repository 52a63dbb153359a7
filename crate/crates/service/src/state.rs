//! Per-alert state and its reconstruction from the audit log.
//!
//! The live service and [`Replayer`] both describe an alert by its latest
//! triage result and its overrides. Replaying a log yields the same state,
//! compared as canonical bytes.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use triage_core::canonical::to_canonical_bytes;
use triage_core::counterfactual::ValidatedCounterfactual;
use triage_core::pipeline::{OutcomeStatus, PipelineConfig, PipelineMode, Tier, TriageOutcome};
use triage_core::verify::{repair_feedback, Attempt, FinalStatus, RepairTrace, VerificationReport};
use triage_core::{Disposition, EvidenceBundle, TriageRecord};

use crate::audit::{sha256_hex, AuditEvent, EventKind};

/// Marks counterfactuals found during triage, as opposed to what-if calls.
pub const CF_SOURCE_TRIAGE: &str = "triage";
pub const CF_SOURCE_WHAT_IF: &str = "what_if";

/// The most recent triage of an alert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latest {
    /// Seq of the event that closed the run; overrides name it.
    pub version: u64,
    pub status: OutcomeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TriageOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The configuration the run used.
    pub config: PipelineConfig,
}

/// A human disposition recorded next to the system's recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub seq: u64,
    pub timestamp: String,
    pub principal: String,
    pub disposition: Disposition,
    pub comment: String,
    /// The outcome version the analyst was looking at.
    pub outcome_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_disposition: Option<Disposition>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlertState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest: Option<Latest>,
    #[serde(default)]
    pub overrides: Vec<OverrideRecord>,
}

impl AlertState {
    pub fn status_str(&self) -> &'static str {
        match &self.latest {
            None => "pending",
            Some(l) => status_str(l.status),
        }
    }
}

pub fn status_str(s: OutcomeStatus) -> &'static str {
    match s {
        OutcomeStatus::Verified => "verified",
        OutcomeStatus::LightTier => "light_tier",
        OutcomeStatus::EscalateToHuman => "escalate_to_human",
        OutcomeStatus::Unverified => "unverified",
        OutcomeStatus::Error => "error",
    }
}

pub const STATUSES: [&str; 6] = ["pending", "verified", "light_tier", "escalate_to_human", "unverified", "error"];

pub fn record_hash(record: &TriageRecord) -> String {
    sha256_hex(&to_canonical_bytes(record).expect("record serializes"))
}

// Payload builders, shared by the live path and the tests.

pub fn bundle_payload(mode: PipelineMode, config: &PipelineConfig, bundle: &EvidenceBundle) -> Value {
    json!({"mode": mode, "config": config, "bundle": bundle})
}

pub fn generation_payload(attempt: usize, record: &TriageRecord) -> Value {
    json!({"attempt": attempt, "record": record})
}

pub fn generation_error_payload(message: &str) -> Value {
    json!({"error": message})
}

pub fn report_payload(attempt: usize, report: &VerificationReport) -> Value {
    json!({"attempt": attempt, "report": report})
}

pub fn counterfactual_payload(source: &str, cf: &ValidatedCounterfactual) -> Value {
    json!({"source": source, "counterfactual": cf})
}

pub fn disposition_payload(outcome: &TriageOutcome) -> Value {
    json!({
        "status": outcome.status,
        "tier": outcome.tier,
        "cf_attempts": outcome.cf_attempts,
        "disposition": outcome.final_record.disposition,
        "confidence": outcome.final_record.confidence,
        "record_hash": record_hash(&outcome.final_record),
    })
}

pub fn error_disposition_payload(message: &str) -> Value {
    json!({"status": OutcomeStatus::Error, "error": message})
}

pub fn override_payload(disposition: Disposition, comment: &str, outcome_version: u64, system: Option<Disposition>) -> Value {
    json!({
        "disposition": disposition,
        "comment": comment,
        "outcome_version": outcome_version,
        "system_disposition": system,
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("event {seq}: {kind} for {alert} outside a triage run")]
    OutsideRun { seq: u64, kind: &'static str, alert: String },
    #[error("event {seq}: malformed {kind} payload: {message}")]
    Payload { seq: u64, kind: &'static str, message: String },
    #[error("event {seq}: final record hash does not match the logged attempts")]
    RecordHash { seq: u64 },
}

/// A triage run between its bundle and its disposition.
#[derive(Debug, Clone)]
struct Run {
    mode: PipelineMode,
    config: PipelineConfig,
    bundle: EvidenceBundle,
    records: Vec<TriageRecord>,
    reports: Vec<VerificationReport>,
    counterfactuals: Vec<ValidatedCounterfactual>,
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct BundlePayload {
    mode: PipelineMode,
    config: PipelineConfig,
    bundle: EvidenceBundle,
}

#[derive(Debug, Deserialize)]
struct GenerationPayload {
    #[serde(default)]
    record: Option<TriageRecord>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ReportPayload {
    report: VerificationReport,
}

#[derive(Debug, Deserialize)]
struct CfPayload {
    source: String,
    counterfactual: ValidatedCounterfactual,
}

#[derive(Debug, Deserialize)]
struct DispositionPayload {
    status: OutcomeStatus,
    #[serde(default)]
    tier: Option<Tier>,
    #[serde(default)]
    cf_attempts: usize,
    #[serde(default)]
    record_hash: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct OverridePayload {
    disposition: Disposition,
    comment: String,
    outcome_version: u64,
    #[serde(default)]
    system_disposition: Option<Disposition>,
}

fn parse<T: serde::de::DeserializeOwned>(e: &AuditEvent) -> Result<T, ReplayError> {
    serde_json::from_value(e.payload.clone()).map_err(|err| ReplayError::Payload {
        seq: e.seq,
        kind: e.kind.as_str(),
        message: err.to_string(),
    })
}

/// Folds events into per-alert state.
#[derive(Debug, Default)]
pub struct Replayer {
    pub alerts: BTreeMap<String, AlertState>,
    open: HashMap<String, Run>,
    pub last_seq: u64,
}

impl Replayer {
    pub fn from_state(alerts: BTreeMap<String, AlertState>, last_seq: u64) -> Self {
        Self { alerts, open: HashMap::new(), last_seq }
    }

    /// Alerts with a run that has not been closed yet.
    pub fn open_runs(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.open.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    pub fn apply(&mut self, e: &AuditEvent) -> Result<(), ReplayError> {
        self.last_seq = e.seq;
        let outside = || ReplayError::OutsideRun { seq: e.seq, kind: e.kind.as_str(), alert: e.alert_id.clone() };
        match e.kind {
            EventKind::BundleBuilt => {
                let p: BundlePayload = parse(e)?;
                self.open.insert(
                    e.alert_id.clone(),
                    Run {
                        mode: p.mode,
                        config: p.config,
                        bundle: p.bundle,
                        records: vec![],
                        reports: vec![],
                        counterfactuals: vec![],
                        error: None,
                    },
                );
            }
            EventKind::GenerationAttempt => {
                let p: GenerationPayload = parse(e)?;
                let run = self.open.get_mut(&e.alert_id).ok_or_else(outside)?;
                if let Some(r) = p.record {
                    run.records.push(r);
                }
                if p.error.is_some() {
                    run.error = p.error;
                }
            }
            EventKind::VerificationReport => {
                let p: ReportPayload = parse(e)?;
                self.open.get_mut(&e.alert_id).ok_or_else(outside)?.reports.push(p.report);
            }
            EventKind::CounterfactualValidated => {
                let p: CfPayload = parse(e)?;
                if p.source == CF_SOURCE_TRIAGE {
                    self.open.get_mut(&e.alert_id).ok_or_else(outside)?.counterfactuals.push(p.counterfactual);
                }
            }
            EventKind::DispositionSet => {
                let p: DispositionPayload = parse(e)?;
                let run = self.open.remove(&e.alert_id).ok_or_else(outside)?;
                let latest = close_run(e, run, p)?;
                self.alerts.entry(e.alert_id.clone()).or_default().latest = Some(latest);
            }
            EventKind::OverrideSet => {
                let p: OverridePayload = parse(e)?;
                self.alerts.entry(e.alert_id.clone()).or_default().overrides.push(OverrideRecord {
                    seq: e.seq,
                    timestamp: e.timestamp.clone(),
                    principal: e.principal.clone(),
                    disposition: p.disposition,
                    comment: p.comment,
                    outcome_version: p.outcome_version,
                    system_disposition: p.system_disposition,
                });
            }
        }
        Ok(())
    }
}

fn close_run(e: &AuditEvent, run: Run, p: DispositionPayload) -> Result<Latest, ReplayError> {
    if p.status == OutcomeStatus::Error {
        return Ok(Latest {
            version: e.seq,
            status: p.status,
            outcome: None,
            error: p.error.or(run.error),
            config: run.config,
        });
    }
    let final_record = run.records.last().cloned().ok_or(ReplayError::RecordHash { seq: e.seq })?;
    if p.record_hash.as_deref() != Some(record_hash(&final_record).as_str()) {
        return Err(ReplayError::RecordHash { seq: e.seq });
    }
    let trace = (run.mode != PipelineMode::LlmOnly).then(|| {
        let attempts: Vec<Attempt> = run
            .records
            .into_iter()
            .zip(run.reports)
            .map(|(record, report)| {
                let feedback = repair_feedback(&report).unwrap_or_default();
                Attempt { record, report, feedback }
            })
            .collect();
        let final_status =
            if p.status == OutcomeStatus::EscalateToHuman { FinalStatus::EscalateToHuman } else { FinalStatus::Verified };
        RepairTrace { iterations: attempts.len().saturating_sub(1), attempts, final_status }
    });
    Ok(Latest {
        version: e.seq,
        status: p.status,
        outcome: Some(TriageOutcome {
            alert_id: e.alert_id.clone(),
            mode: run.mode,
            bundle: run.bundle,
            trace,
            final_record,
            counterfactuals: run.counterfactuals,
            cf_attempts: p.cf_attempts,
            status: p.status,
            tier: p.tier.unwrap_or(Tier::Full),
        }),
        error: None,
        config: run.config,
    })
}

/// Replays a whole log.
pub fn replay(events: &[AuditEvent]) -> Result<BTreeMap<String, AlertState>, ReplayError> {
    let mut r = Replayer::default();
    for e in events {
        r.apply(e)?;
    }
    Ok(r.alerts)
}

/// Periodic copy of the state; the log stays authoritative.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Snapshot {
    pub last_seq: u64,
    pub alerts: BTreeMap<String, AlertState>,
}
