//! The triage service: alerts, their evidence, the pipeline, overrides and
//! the audit trail, independent of transport.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use triage_core::canonical::to_canonical_bytes;
use triage_core::counterfactual::{
    find_counterfactuals, validate_counterfactual, CfEnv, CfError, CounterfactualEdit, EditError, ValidatedCounterfactual,
};
use triage_core::evidence::{retrieve, EvidenceIndex, IndexError};
use triage_core::generate::{GenEnv, Generator, GenerationError};
use triage_core::pipeline::{run_pipeline, OutcomeStatus, PipelineConfig, PipelineEnv, StageEvent, TriageOutcome};
use triage_core::simgen::{DatasetSplit, World};
use triage_core::verify::Verifier;
use triage_core::{AclTag, AlertContext, Disposition, EvidenceBundle, SourceType};

use crate::audit::{system_clock, AuditError, AuditEvent, AuditLog, Clock, EventKind, NewEvent};
use crate::config::{pipeline_with, ServiceConfig};
use crate::state::{
    bundle_payload, counterfactual_payload, disposition_payload, error_disposition_payload, generation_error_payload,
    generation_payload, override_payload, report_payload, AlertState, Latest, OverrideRecord, Replayer, ReplayError,
    Snapshot, CF_SOURCE_TRIAGE, CF_SOURCE_WHAT_IF,
};

/// File layout of a data directory.
#[derive(Debug, Clone)]
pub struct DataDir(pub PathBuf);

impl DataDir {
    pub fn world(&self) -> PathBuf {
        self.0.join("world.json")
    }
    pub fn split(&self) -> PathBuf {
        self.0.join("split.json")
    }
    pub fn index(&self) -> PathBuf {
        self.0.join("index.json")
    }
    pub fn audit(&self) -> PathBuf {
        self.0.join("audit.jsonl")
    }
    pub fn snapshot(&self) -> PathBuf {
        self.0.join("snapshot.json")
    }
    pub fn reports(&self) -> PathBuf {
        self.0.join("reports")
    }
    pub fn records(&self) -> PathBuf {
        self.0.join("records")
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown alert {0}")]
    UnknownAlert(String),
    #[error("alert {0} has not been triaged")]
    NotTriaged(String),
    #[error("a principal is required")]
    MissingPrincipal,
    #[error("principal {0} is not configured")]
    UnknownPrincipal(String),
    #[error("requested clearance {requested:?} exceeds the principal's {allowed:?}")]
    ClearanceExceeded { requested: AclTag, allowed: AclTag },
    #[error("an override needs a comment")]
    CommentRequired,
    #[error("outcome version {expected} is stale; current is {current}")]
    StaleOutcome { expected: u64, current: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("no accepted counterfactual for {0}")]
    NoCounterfactual(String),
    #[error("unknown variant {0}")]
    UnknownVariant(String),
    #[error("no metrics for {0}; run eval first")]
    MetricsNotFound(String),
    #[error("evidence index missing; run index first")]
    IndexMissing,
    #[error("generator failed: {0}")]
    Generator(GenerationError),
    #[error("missing {0}; run gen first")]
    DataMissing(PathBuf),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("no route {0}")]
    NoRoute(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    /// Machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownAlert(_) => "unknown_alert",
            ServiceError::NotTriaged(_) => "not_triaged",
            ServiceError::MissingPrincipal => "missing_principal",
            ServiceError::UnknownPrincipal(_) => "unknown_principal",
            ServiceError::ClearanceExceeded { .. } => "clearance_exceeded",
            ServiceError::CommentRequired => "comment_required",
            ServiceError::StaleOutcome { .. } => "stale_outcome",
            ServiceError::InvalidConfig(_) => "invalid_config",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Edit(EditError::Plausibility { .. }) => "plausibility_violation",
            ServiceError::Edit(EditError::Impossible { .. }) => "impossible_edit",
            ServiceError::NoCounterfactual(_) => "no_counterfactual",
            ServiceError::UnknownVariant(_) => "unknown_variant",
            ServiceError::MetricsNotFound(_) => "metrics_not_found",
            ServiceError::IndexMissing => "index_missing",
            ServiceError::Generator(_) => "generator_failed",
            ServiceError::DataMissing(_) => "data_missing",
            ServiceError::NoRoute(_) => "no_route",
            ServiceError::Audit(_) | ServiceError::Replay(_) | ServiceError::Internal(_) => "internal",
        }
    }
}

fn internal(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(e.to_string())
}

/// Which split an alert belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn parse(s: &str) -> Option<SplitName> {
        match s {
            "train" => Some(SplitName::Train),
            "val" => Some(SplitName::Val),
            "test" => Some(SplitName::Test),
            _ => None,
        }
    }
}

/// Queue entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertSummary {
    pub alert_id: String,
    pub alert_type: triage_core::AlertType,
    pub alert_time: i64,
    pub customer_id: String,
    pub rule_score: f64,
    pub split: SplitName,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disposition: Option<Disposition>,
    pub overrides: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertPage {
    pub items: Vec<AlertSummary>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

/// An alert's latest result and overrides, as returned to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeView {
    pub alert_id: String,
    pub status: String,
    #[serde(flatten)]
    pub state: AlertState,
}

/// Reads a JSON file written by this crate.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::DataMissing(path.into())),
        Err(e) => return Err(internal(format!("{}: {e}", path.display()))),
    };
    serde_json::from_str(&text).map_err(|e| internal(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(internal)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).and_then(|_| std::fs::rename(&tmp, path)).map_err(internal)
}

pub fn load_index(path: &Path) -> Result<Option<EvidenceIndex>, ServiceError> {
    match std::fs::read_to_string(path) {
        Ok(text) => EvidenceIndex::from_json(&text).map(Some).map_err(|e: IndexError| internal(e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(internal(e)),
    }
}

/// Principal recorded for work started outside HTTP.
pub const SYSTEM_PRINCIPAL: &str = "system";

pub struct TriageService {
    config: ServiceConfig,
    data: DataDir,
    world: World,
    split: DatasetSplit,
    split_of: HashMap<String, SplitName>,
    contexts: BTreeMap<String, AlertContext>,
    /// Alert ids by `(alert_time, id)`.
    queue: Vec<String>,
    index: Option<EvidenceIndex>,
    gen_env: Arc<GenEnv>,
    verifier: Option<Verifier>,
    audit: AuditLog,
    alerts: BTreeMap<String, Mutex<AlertState>>,
    changes: AtomicUsize,
}

impl TriageService {
    /// Loads the data directory and rebuilds state from the snapshot and
    /// the audit log.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        Self::open_with_clock(config, system_clock())
    }

    pub fn open_with_clock(config: ServiceConfig, clock: Clock) -> Result<Self, ServiceError> {
        let data = DataDir(config.data_dir.clone());
        let world: World = read_json(&data.world())?;
        let split: DatasetSplit = read_json(&data.split())?;
        let index = load_index(&data.index())?;
        std::fs::create_dir_all(&data.0).map_err(internal)?;
        let audit = AuditLog::open(&data.audit(), clock)?;

        let mut split_of = HashMap::new();
        for (ids, name) in [
            (&split.train_alert_ids, SplitName::Train),
            (&split.val_alert_ids, SplitName::Val),
            (&split.test_alert_ids, SplitName::Test),
        ] {
            for id in ids {
                split_of.insert(id.clone(), name);
            }
        }
        let widx = world.index();
        let contexts: BTreeMap<String, AlertContext> =
            world.alerts.iter().filter_map(|a| widx.context(&a.id).map(|c| (a.id.clone(), c))).collect();
        let mut order: Vec<(i64, &str)> = world.alerts.iter().map(|a| (a.alert_time, a.id.as_str())).collect();
        order.sort_unstable();
        let queue = order.into_iter().map(|(_, id)| id.to_string()).collect();

        let lexicon: Vec<String> = world.entity_lexicon().into_iter().collect();
        let policies = match &index {
            Some(ix) => ix.of_type(SourceType::Policy).cloned().collect(),
            None => vec![],
        };
        let verifier = index.as_ref().map(|ix| Verifier::from_index(ix, lexicon.clone()));
        let gen_env = Arc::new(GenEnv { lexicon, policies });

        let state = restore(&data, &audit)?;
        let alerts = world.alerts.iter().map(|a| (a.id.clone(), Mutex::new(state.get(&a.id).cloned().unwrap_or_default()))).collect();
        Ok(Self {
            config,
            data,
            world,
            split,
            split_of,
            contexts,
            queue,
            index,
            gen_env,
            verifier,
            audit,
            alerts,
            changes: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn data_dir(&self) -> &DataDir {
        &self.data
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn split(&self) -> &DatasetSplit {
        &self.split
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    fn lock(&self, alert_id: &str) -> Result<MutexGuard<'_, AlertState>, ServiceError> {
        let m = self.alerts.get(alert_id).ok_or_else(|| ServiceError::UnknownAlert(alert_id.into()))?;
        Ok(m.lock().unwrap_or_else(|p| p.into_inner()))
    }

    /// The context as shown to clients: ground-truth labels removed.
    pub fn context(&self, alert_id: &str) -> Result<AlertContext, ServiceError> {
        let mut ctx = self.contexts.get(alert_id).cloned().ok_or_else(|| ServiceError::UnknownAlert(alert_id.into()))?;
        ctx.alert.label = None;
        Ok(ctx)
    }

    pub fn split_of(&self, alert_id: &str) -> Option<SplitName> {
        self.split_of.get(alert_id).copied()
    }

    /// Clearance of a principal, which must be present and, when principals
    /// are configured, known.
    pub fn clearance_of(&self, principal: Option<&str>) -> Result<(String, AclTag), ServiceError> {
        let p = principal.map(str::trim).filter(|p| !p.is_empty()).ok_or(ServiceError::MissingPrincipal)?;
        if self.config.principals.is_empty() {
            return Ok((p.to_string(), self.config.pipeline.clearance));
        }
        let c = self.config.principals.get(p).ok_or_else(|| ServiceError::UnknownPrincipal(p.into()))?;
        Ok((p.to_string(), *c))
    }

    pub fn list_alerts(
        &self,
        split: Option<SplitName>,
        status: Option<&str>,
        page: usize,
        page_size: usize,
    ) -> Result<AlertPage, ServiceError> {
        if let Some(s) = status {
            if !crate::state::STATUSES.contains(&s) {
                return Err(ServiceError::BadRequest(format!("unknown status {s}")));
            }
        }
        if page_size == 0 || page_size > 1000 {
            return Err(ServiceError::BadRequest("page_size must be in 1..=1000".into()));
        }
        let mut matched = vec![];
        for id in &self.queue {
            let in_split = self.split_of(id);
            if split.is_some_and(|s| in_split != Some(s)) {
                continue;
            }
            let st = self.lock(id)?;
            let st_str = st.status_str();
            if status.is_some_and(|s| s != st_str) {
                continue;
            }
            let ctx = &self.contexts[id];
            matched.push(AlertSummary {
                alert_id: id.clone(),
                alert_type: ctx.alert.alert_type,
                alert_time: ctx.alert.alert_time,
                customer_id: ctx.alert.customer_id.clone(),
                rule_score: ctx.alert.trigger.max_score(),
                split: in_split.unwrap_or(SplitName::Train),
                status: st_str.to_string(),
                disposition: st.latest.as_ref().and_then(|l| l.outcome.as_ref()).map(|o| o.final_record.disposition),
                overrides: st.overrides.len(),
            });
        }
        let total = matched.len();
        let items = matched.into_iter().skip(page.saturating_mul(page_size)).take(page_size).collect();
        Ok(AlertPage { items, page, page_size, total })
    }

    fn effective_config(&self, overrides: &Value, clearance: AclTag) -> Result<PipelineConfig, ServiceError> {
        if !overrides.is_object() {
            return Err(ServiceError::BadRequest("configuration overrides must be a JSON object".into()));
        }
        let mut config = pipeline_with(&self.config.pipeline, overrides).map_err(ServiceError::InvalidConfig)?;
        if overrides.get("clearance").is_some() && config.clearance > clearance {
            return Err(ServiceError::ClearanceExceeded { requested: config.clearance, allowed: clearance });
        }
        config.clearance = config.clearance.min(clearance);
        Ok(config)
    }

    /// The latest triage bundle, or a fresh retrieval at the principal's
    /// clearance when the alert has not been triaged.
    pub fn bundle(&self, alert_id: &str, clearance: AclTag) -> Result<EvidenceBundle, ServiceError> {
        let ctx = self.contexts.get(alert_id).ok_or_else(|| ServiceError::UnknownAlert(alert_id.into()))?;
        if let Some(o) = self.lock(alert_id)?.latest.as_ref().and_then(|l| l.outcome.as_ref()) {
            return Ok(o.bundle.clone());
        }
        let index = self.index.as_ref().ok_or(ServiceError::IndexMissing)?;
        let mut config = self.config.pipeline.clone();
        config.clearance = config.clearance.min(clearance);
        Ok(retrieve(index, &config.query(ctx)))
    }

    /// Runs the pipeline for one alert, logging every stage before
    /// returning. Runs on one alert are serialized.
    pub fn triage_alert(&self, alert_id: &str, principal: &str, clearance: AclTag, overrides: &Value) -> Result<OutcomeView, ServiceError> {
        let ctx = self.contexts.get(alert_id).ok_or_else(|| ServiceError::UnknownAlert(alert_id.into()))?;
        let config = self.effective_config(overrides, clearance)?;
        let index = self.index.as_ref().ok_or(ServiceError::IndexMissing)?;
        let verifier = self.verifier.as_ref().ok_or(ServiceError::IndexMissing)?;
        let generator = Generator::new(config.generator_config(), self.gen_env.clone())
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;

        let mut state = self.lock(alert_id)?;
        let mut log_error: Option<AuditError> = None;
        let mut emit = |kind: EventKind, payload: Value| {
            if log_error.is_none() {
                if let Err(e) = self.audit.append(NewEvent { kind, alert_id, principal, payload }) {
                    log_error = Some(e);
                }
            }
        };
        let env = PipelineEnv { index, generator: &generator, verifier };
        let result = run_pipeline(ctx, &env, &config, &mut |stage| match stage {
            StageEvent::BundleBuilt(b) => emit(EventKind::BundleBuilt, bundle_payload(config.mode, &config, b)),
            StageEvent::Generated { attempt, record } => emit(EventKind::GenerationAttempt, generation_payload(attempt, record)),
            StageEvent::Verified { attempt, report } => emit(EventKind::VerificationReport, report_payload(attempt, report)),
            StageEvent::Counterfactual(cf) => emit(EventKind::CounterfactualValidated, counterfactual_payload(CF_SOURCE_TRIAGE, cf)),
        });
        let result = result.map(enforce_status);
        let closing = match &result {
            Ok(outcome) => disposition_payload(outcome),
            Err(e) => {
                emit(EventKind::GenerationAttempt, generation_error_payload(&e.to_string()));
                error_disposition_payload(&e.to_string())
            }
        };
        if let Some(e) = log_error {
            return Err(e.into());
        }
        let event = self.audit.append(NewEvent { kind: EventKind::DispositionSet, alert_id, principal, payload: closing })?;
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                let error = Some(e.to_string());
                state.latest = Some(Latest { version: event.seq, status: OutcomeStatus::Error, outcome: None, error, config });
                drop(state);
                self.changed()?;
                return Err(ServiceError::Generator(e));
            }
        };
        state.latest = Some(Latest { version: event.seq, status: outcome.status, outcome: Some(outcome), error: None, config });
        let view = OutcomeView { alert_id: alert_id.into(), status: state.status_str().into(), state: state.clone() };
        drop(state);
        self.changed()?;
        Ok(view)
    }

    pub fn outcome(&self, alert_id: &str) -> Result<OutcomeView, ServiceError> {
        let state = self.lock(alert_id)?;
        Ok(OutcomeView { alert_id: alert_id.into(), status: state.status_str().into(), state: state.clone() })
    }

    /// Records an analyst's disposition next to the system's.
    pub fn set_disposition(
        &self,
        alert_id: &str,
        principal: Option<&str>,
        disposition: Disposition,
        comment: &str,
        expected_version: Option<u64>,
    ) -> Result<AuditEvent, ServiceError> {
        let principal = principal.map(str::trim).filter(|p| !p.is_empty()).ok_or(ServiceError::MissingPrincipal)?;
        let mut state = self.lock(alert_id)?;
        let latest = state.latest.as_ref().ok_or_else(|| ServiceError::NotTriaged(alert_id.into()))?;
        if comment.trim().is_empty() {
            return Err(ServiceError::CommentRequired);
        }
        if let Some(v) = expected_version {
            if v != latest.version {
                return Err(ServiceError::StaleOutcome { expected: v, current: latest.version });
            }
        }
        let system = latest.outcome.as_ref().map(|o| o.final_record.disposition);
        let payload = override_payload(disposition, comment, latest.version, system);
        let outcome_version = latest.version;
        let event = self.audit.append(NewEvent { kind: EventKind::OverrideSet, alert_id, principal, payload })?;
        state.overrides.push(OverrideRecord {
            seq: event.seq,
            timestamp: event.timestamp.clone(),
            principal: principal.into(),
            disposition,
            comment: comment.into(),
            outcome_version,
            system_disposition: system,
        });
        drop(state);
        self.changed()?;
        Ok(event)
    }

    /// Validates an explicit edit, or returns the first counterfactual the
    /// search accepts. Either way the result is logged.
    pub fn what_if(&self, alert_id: &str, principal: &str, edit: Option<&CounterfactualEdit>) -> Result<ValidatedCounterfactual, ServiceError> {
        let ctx = self.contexts.get(alert_id).ok_or_else(|| ServiceError::UnknownAlert(alert_id.into()))?;
        let (outcome, config) = {
            let state = self.lock(alert_id)?;
            let latest = state.latest.as_ref().ok_or_else(|| ServiceError::NotTriaged(alert_id.into()))?;
            let outcome = latest.outcome.clone().ok_or_else(|| ServiceError::NotTriaged(alert_id.into()))?;
            (outcome, latest.config.clone())
        };
        let index = self.index.as_ref().ok_or(ServiceError::IndexMissing)?;
        let verifier = self.verifier.as_ref().ok_or(ServiceError::IndexMissing)?;
        let generator = Generator::new(config.generator_config(), self.gen_env.clone())
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        let cf = config.cf_config();
        let env = CfEnv { generator: &generator, verifier, corpus: Some(index), config: &cf };
        let result = match edit {
            Some(edit) => {
                if edit.atoms.is_empty() || edit.atoms.len() > cf.budget {
                    return Err(ServiceError::BadRequest(format!("an edit needs 1..={} atoms", cf.budget)));
                }
                validate_counterfactual(edit, ctx, &outcome.bundle, &env).map_err(|e| match e {
                    CfError::Edit(e) => ServiceError::Edit(e),
                    CfError::Generation(e) => ServiceError::Generator(e),
                })?
            }
            None => find_counterfactuals(&outcome.final_record, ctx, &outcome.bundle, &env)
                .map_err(ServiceError::Generator)?
                .accepted
                .into_iter()
                .next()
                .ok_or_else(|| ServiceError::NoCounterfactual(alert_id.into()))?,
        };
        self.audit.append(NewEvent {
            kind: EventKind::CounterfactualValidated,
            alert_id,
            principal,
            payload: counterfactual_payload(CF_SOURCE_WHAT_IF, &result),
        })?;
        Ok(result)
    }

    pub fn metrics(&self, variant: &str) -> Result<Value, ServiceError> {
        let v = triage_core::eval::Variant::parse(variant).ok_or_else(|| ServiceError::UnknownVariant(variant.into()))?;
        let path = self.data.reports().join(format!("report.{}.json", v.as_str()));
        match read_json(&path) {
            Err(ServiceError::DataMissing(_)) => Err(ServiceError::MetricsNotFound(variant.into())),
            other => other,
        }
    }

    fn changed(&self) -> Result<(), ServiceError> {
        let n = self.changes.fetch_add(1, Ordering::SeqCst) + 1;
        if self.config.snapshot_every > 0 && n % self.config.snapshot_every == 0 {
            self.write_snapshot()?;
        }
        Ok(())
    }

    /// Holds every alert lock, so no run is half-logged, while copying state.
    pub fn state_snapshot(&self) -> Snapshot {
        let guards: Vec<(&String, MutexGuard<'_, AlertState>)> =
            self.alerts.iter().map(|(id, m)| (id, m.lock().unwrap_or_else(|p| p.into_inner()))).collect();
        let last_seq = self.audit.last_seq();
        let alerts = guards
            .iter()
            .filter(|(_, g)| g.latest.is_some() || !g.overrides.is_empty())
            .map(|(id, g)| ((*id).clone(), (**g).clone()))
            .collect();
        Snapshot { last_seq, alerts }
    }

    pub fn write_snapshot(&self) -> Result<(), ServiceError> {
        let snap = self.state_snapshot();
        write_atomic(&self.data.snapshot(), &to_canonical_bytes(&snap).map_err(internal)?)
    }
}

/// A record that failed verification only ever leaves with the escalation
/// status.
pub fn enforce_status(mut o: TriageOutcome) -> TriageOutcome {
    if o.trace.as_ref().is_some_and(|t| !t.final_report().passed) {
        o.status = OutcomeStatus::EscalateToHuman;
    }
    o
}

/// State from the snapshot, when it is usable, plus the log after it.
fn restore(data: &DataDir, audit: &AuditLog) -> Result<BTreeMap<String, AlertState>, ServiceError> {
    let events = audit.snapshot();
    let snap: Option<Snapshot> = read_json(&data.snapshot()).ok();
    let mut r = match snap {
        Some(s) if s.last_seq <= audit.last_seq() => Replayer::from_state(s.alerts, s.last_seq),
        _ => Replayer::default(),
    };
    let from = r.last_seq;
    for e in events.iter().filter(|e| e.seq > from) {
        r.apply(e)?;
    }
    Ok(r.alerts)
}
