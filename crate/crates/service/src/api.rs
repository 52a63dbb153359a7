//! HTTP+JSON API. Every response body is canonical JSON; errors carry a
//! machine-readable code under `error.code`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value};
use triage_core::canonical::to_canonical_bytes;
use triage_core::counterfactual::{edit_atom_schema, CounterfactualEdit, EditError};
use triage_core::Disposition;

use crate::service::{ServiceError, SplitName, TriageService};

/// Header naming the acting principal.
pub const PRINCIPAL_HEADER: &str = "x-principal";
pub const MAX_AUDIT_PAGE: usize = 1000;

pub fn router(service: Arc<TriageService>) -> Router {
    Router::new()
        .route("/alerts", get(list_alerts))
        .route("/alerts/{id}", get(alert))
        .route("/alerts/{id}/bundle", get(bundle))
        .route("/alerts/{id}/triage", post(triage))
        .route("/alerts/{id}/outcome", get(outcome))
        .route("/alerts/{id}/counterfactuals", post(counterfactuals))
        .route("/alerts/{id}/disposition", post(disposition))
        .route("/audit", get(audit))
        .route("/metrics/{variant}", get(metrics))
        .route("/schema/edit-atoms", get(edit_atoms))
        .fallback(not_found)
        .with_state(service)
}

/// Canonical JSON with a status code.
pub struct Canonical(pub StatusCode, pub Value);

impl IntoResponse for Canonical {
    fn into_response(self) -> Response {
        let body = triage_core::canonical::value_to_canonical(&self.1);
        (self.0, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn ok<T: serde::Serialize>(v: &T) -> Result<Canonical, ApiError> {
    let bytes = to_canonical_bytes(v).map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?;
    Ok(Canonical(StatusCode::OK, value))
}

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::UnknownAlert(_)
        | ServiceError::MetricsNotFound(_)
        | ServiceError::NoCounterfactual(_)
        | ServiceError::NoRoute(_) => StatusCode::NOT_FOUND,
        ServiceError::NotTriaged(_) | ServiceError::StaleOutcome { .. } => StatusCode::CONFLICT,
        ServiceError::MissingPrincipal => StatusCode::UNAUTHORIZED,
        ServiceError::UnknownPrincipal(_) | ServiceError::ClearanceExceeded { .. } => StatusCode::FORBIDDEN,
        ServiceError::CommentRequired | ServiceError::Edit(_) => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::InvalidConfig(_) | ServiceError::BadRequest(_) | ServiceError::UnknownVariant(_) => {
            StatusCode::BAD_REQUEST
        }
        ServiceError::Generator(_) => StatusCode::BAD_GATEWAY,
        ServiceError::IndexMissing | ServiceError::DataMissing(_) => StatusCode::SERVICE_UNAVAILABLE,
        ServiceError::Audit(_) | ServiceError::Replay(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({"code": self.0.code(), "message": self.0.to_string()});
        match &self.0 {
            ServiceError::Edit(EditError::Plausibility { rule, atom }) => {
                err["rule"] = json!(rule.as_str());
                err["atom"] = json!(atom);
            }
            ServiceError::Edit(EditError::Impossible { atom, .. }) => err["atom"] = json!(atom),
            ServiceError::Generator(_) => err["status"] = json!("error"),
            _ => {}
        }
        Canonical(status_of(&self.0), json!({"error": err})).into_response()
    }
}

type ApiResult = Result<Canonical, ApiError>;

fn principal(headers: &HeaderMap) -> Option<&str> {
    headers.get(PRINCIPAL_HEADER).and_then(|v| v.to_str().ok())
}

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError(ServiceError::BadRequest(msg.into()))
}

/// Parses an optional JSON body; empty means `default`.
fn body_json(body: &Bytes, default: Value) -> Result<Value, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(default);
    }
    serde_json::from_slice(body).map_err(|e| bad(format!("malformed JSON body: {e}")))
}

fn num<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str, default: T) -> Result<T, ApiError> {
    q.get(key).map_or(Ok(default), |v| v.parse().map_err(|_| bad(format!("{key} must be a non-negative integer"))))
}

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?
        .map_err(ApiError)
}

async fn list_alerts(State(s): State<Arc<TriageService>>, headers: HeaderMap, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    s.clearance_of(principal(&headers))?;
    let split = match q.get("split").map(String::as_str) {
        None | Some("all") => None,
        Some(v) => Some(SplitName::parse(v).ok_or_else(|| bad(format!("unknown split {v}")))?),
    };
    let page = num(&q, "page", 0usize)?;
    let page_size = num(&q, "page_size", s.config().page_size)?;
    let status = q.get("status").cloned();
    let page = blocking(move || s.list_alerts(split, status.as_deref(), page, page_size)).await?;
    ok(&page)
}

async fn alert(State(s): State<Arc<TriageService>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    s.clearance_of(principal(&headers))?;
    let ctx = s.context(&id)?;
    let status = s.outcome(&id)?.status;
    ok(&json!({"context": ctx, "split": s.split_of(&id), "status": status}))
}

async fn bundle(State(s): State<Arc<TriageService>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let (_, clearance) = s.clearance_of(principal(&headers))?;
    let b = blocking(move || s.bundle(&id, clearance)).await?;
    ok(&b)
}

async fn triage(State(s): State<Arc<TriageService>>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let (who, clearance) = s.clearance_of(principal(&headers))?;
    let overrides = body_json(&body, json!({}))?;
    let view = blocking(move || s.triage_alert(&id, &who, clearance, &overrides)).await?;
    ok(&view)
}

async fn outcome(State(s): State<Arc<TriageService>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    s.clearance_of(principal(&headers))?;
    ok(&s.outcome(&id)?)
}

async fn counterfactuals(State(s): State<Arc<TriageService>>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let (who, _) = s.clearance_of(principal(&headers))?;
    let edit: Option<CounterfactualEdit> = match body_json(&body, Value::Null)? {
        Value::Null => None,
        v => Some(serde_json::from_value(v).map_err(|e| bad(format!("malformed edit: {e}")))?),
    };
    let v = blocking(move || s.what_if(&id, &who, edit.as_ref())).await?;
    ok(&v)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DispositionBody {
    disposition: Disposition,
    #[serde(default)]
    comment: String,
    #[serde(default)]
    expected_version: Option<u64>,
}

async fn disposition(State(s): State<Arc<TriageService>>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let who = principal(&headers).map(str::to_string);
    s.clearance_of(who.as_deref())?;
    let b: DispositionBody =
        serde_json::from_value(body_json(&body, Value::Null)?).map_err(|e| bad(format!("malformed disposition: {e}")))?;
    let event = blocking(move || s.set_disposition(&id, who.as_deref(), b.disposition, &b.comment, b.expected_version)).await?;
    ok(&event)
}

async fn audit(State(s): State<Arc<TriageService>>, headers: HeaderMap, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    s.clearance_of(principal(&headers))?;
    let from = num(&q, "from_seq", 1u64)?;
    let limit = num(&q, "limit", MAX_AUDIT_PAGE)?.min(MAX_AUDIT_PAGE);
    let events = match q.get("alert_id") {
        Some(a) => s.audit().events_for(a).into_iter().filter(|e| e.seq >= from).take(limit).collect(),
        None => s.audit().events_from(from, limit),
    };
    ok(&json!({"events": events, "last_seq": s.audit().last_seq()}))
}

async fn metrics(State(s): State<Arc<TriageService>>, headers: HeaderMap, Path(variant): Path<String>) -> ApiResult {
    s.clearance_of(principal(&headers))?;
    ok(&s.metrics(&variant)?)
}

async fn edit_atoms() -> ApiResult {
    ok(&edit_atom_schema())
}

async fn not_found(uri: axum::http::Uri) -> ApiError {
    ApiError(ServiceError::NoRoute(uri.path().to_string()))
}
