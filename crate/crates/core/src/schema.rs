//! Structural validation of triage-record documents.
//!
//! Validation walks only the known record shape, so arbitrarily nested
//! unknown content is reported, never traversed.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::TriageRecord;

/// Stable violation codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemaCode {
    NotAnObject,
    MissingField,
    UnknownField,
    WrongType,
    InvalidEnum,
    ConfidenceOutOfRange,
    EmptyParagraphs,
    UncitedParagraph,
    OrphanCitation,
    OverlappingEvidenceSets,
    ClaimNotCited,
    InvalidClaim,
}

impl SchemaCode {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaCode::NotAnObject => "NOT_AN_OBJECT",
            SchemaCode::MissingField => "MISSING_FIELD",
            SchemaCode::UnknownField => "UNKNOWN_FIELD",
            SchemaCode::WrongType => "WRONG_TYPE",
            SchemaCode::InvalidEnum => "INVALID_ENUM",
            SchemaCode::ConfidenceOutOfRange => "CONFIDENCE_OUT_OF_RANGE",
            SchemaCode::EmptyParagraphs => "EMPTY_PARAGRAPHS",
            SchemaCode::UncitedParagraph => "UNCITED_PARAGRAPH",
            SchemaCode::OrphanCitation => "ORPHAN_CITATION",
            SchemaCode::OverlappingEvidenceSets => "OVERLAPPING_EVIDENCE_SETS",
            SchemaCode::ClaimNotCited => "CLAIM_NOT_CITED",
            SchemaCode::InvalidClaim => "INVALID_CLAIM",
        }
    }
}

impl fmt::Display for SchemaCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaViolation {
    pub code: SchemaCode,
    pub path: String,
    pub detail: String,
}

const DISPOSITIONS: &[&str] = &["dismiss", "monitor", "escalate"];
const ALERT_TYPES: &[&str] = &["structuring", "rapid_movement", "high_risk_counterparty", "fan_in"];
const CLAIM_KINDS: &[&str] = &["amount", "timestamp", "count", "threshold_comparison", "entity"];
const COMPARATORS: &[&str] = &["lt", "le", "gt", "ge"];

const RECORD_FIELDS: &[&str] = &[
    "alert_id",
    "disposition",
    "confidence",
    "typologies",
    "paragraphs",
    "supporting_ids",
    "contradicting_or_missing_ids",
    "unknowns",
    "next_actions",
    "generator_tag",
];
const PARAGRAPH_FIELDS: &[&str] = &["text", "citations", "claims"];
const CLAIM_FIELDS: &[&str] = &["kind", "value", "evidence_id", "field_path", "comparator"];

struct Walker {
    out: Vec<SchemaViolation>,
}

impl Walker {
    fn push(&mut self, code: SchemaCode, path: impl Into<String>, detail: impl Into<String>) {
        self.out.push(SchemaViolation { code, path: path.into(), detail: detail.into() });
    }

    fn unknown_fields(&mut self, obj: &Map<String, Value>, allowed: &[&str], path: &str) {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.push(SchemaCode::UnknownField, join(path, key), "field not in schema");
            }
        }
    }

    fn required<'v>(&mut self, obj: &'v Map<String, Value>, key: &str, path: &str) -> Option<&'v Value> {
        let v = obj.get(key);
        if v.is_none() {
            self.push(SchemaCode::MissingField, join(path, key), "required field missing");
        }
        v
    }

    fn string<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v str> {
        match v.as_str() {
            Some(s) => Some(s),
            None => {
                self.push(SchemaCode::WrongType, path, format!("expected string, got {}", kind(v)));
                None
            }
        }
    }

    fn enum_str(&mut self, v: &Value, allowed: &[&str], path: &str) {
        if let Some(s) = self.string(v, path) {
            if !allowed.contains(&s) {
                self.push(SchemaCode::InvalidEnum, path, format!("{s:?} not one of {allowed:?}"));
            }
        }
    }

    fn string_list<'v>(&mut self, v: &'v Value, path: &str) -> Vec<&'v str> {
        let Some(items) = v.as_array() else {
            self.push(SchemaCode::WrongType, path, format!("expected array, got {}", kind(v)));
            return Vec::new();
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if let Some(s) = self.string(item, &format!("{path}[{i}]")) {
                out.push(s);
            }
        }
        out
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Validates a parsed document against the triage-record schema and its
/// invariants. Returns an empty list iff the document is a valid record.
pub fn validate_record(doc: &Value) -> Vec<SchemaViolation> {
    let mut w = Walker { out: Vec::new() };
    let Some(obj) = doc.as_object() else {
        w.push(SchemaCode::NotAnObject, "", format!("expected object, got {}", kind(doc)));
        return w.out;
    };
    w.unknown_fields(obj, RECORD_FIELDS, "");

    for key in ["alert_id", "generator_tag"] {
        if let Some(v) = w.required(obj, key, "") {
            w.string(v, key);
        }
    }
    if let Some(v) = w.required(obj, "disposition", "") {
        w.enum_str(v, DISPOSITIONS, "disposition");
    }
    if let Some(v) = w.required(obj, "confidence", "") {
        match v.as_f64() {
            Some(c) if (0.0..=1.0).contains(&c) => {}
            Some(c) => w.push(SchemaCode::ConfidenceOutOfRange, "confidence", format!("{c} not in [0,1]")),
            None => w.push(SchemaCode::WrongType, "confidence", format!("expected number, got {}", kind(v))),
        }
    }
    if let Some(v) = w.required(obj, "typologies", "") {
        match v.as_array() {
            Some(items) => {
                for (i, item) in items.iter().enumerate() {
                    w.enum_str(item, ALERT_TYPES, &format!("typologies[{i}]"));
                }
            }
            None => w.push(SchemaCode::WrongType, "typologies", "expected array"),
        }
    }
    for key in ["unknowns", "next_actions"] {
        if let Some(v) = w.required(obj, key, "") {
            w.string_list(v, key);
        }
    }
    let supporting: BTreeSet<&str> = w
        .required(obj, "supporting_ids", "")
        .map(|v| w_list(&mut w, v, "supporting_ids"))
        .unwrap_or_default();
    let contradicting: BTreeSet<&str> = w
        .required(obj, "contradicting_or_missing_ids", "")
        .map(|v| w_list(&mut w, v, "contradicting_or_missing_ids"))
        .unwrap_or_default();
    for id in supporting.intersection(&contradicting) {
        w.push(
            SchemaCode::OverlappingEvidenceSets,
            "contradicting_or_missing_ids",
            format!("{id} listed as both supporting and contradicting"),
        );
    }

    if let Some(v) = w.required(obj, "paragraphs", "") {
        match v.as_array() {
            Some(paras) if paras.is_empty() => {
                w.push(SchemaCode::EmptyParagraphs, "paragraphs", "at least one paragraph required")
            }
            Some(paras) => {
                for (i, para) in paras.iter().enumerate() {
                    paragraph(&mut w, para, &format!("paragraphs[{i}]"), &supporting, &contradicting);
                }
            }
            None => w.push(SchemaCode::WrongType, "paragraphs", format!("expected array, got {}", kind(v))),
        }
    }
    w.out
}

fn w_list<'v>(w: &mut Walker, v: &'v Value, path: &str) -> BTreeSet<&'v str> {
    w.string_list(v, path).into_iter().collect()
}

fn paragraph(
    w: &mut Walker,
    para: &Value,
    path: &str,
    supporting: &BTreeSet<&str>,
    contradicting: &BTreeSet<&str>,
) {
    let Some(obj) = para.as_object() else {
        w.push(SchemaCode::WrongType, path, format!("expected object, got {}", kind(para)));
        return;
    };
    w.unknown_fields(obj, PARAGRAPH_FIELDS, path);
    if let Some(v) = w.required(obj, "text", path) {
        w.string(v, &join(path, "text"));
    }
    let citations: Vec<&str> = match w.required(obj, "citations", path) {
        Some(v) => w.string_list(v, &join(path, "citations")),
        None => Vec::new(),
    };
    if obj.get("citations").is_some_and(|c| c.as_array().is_some_and(|a| a.is_empty())) {
        w.push(SchemaCode::UncitedParagraph, path, "paragraph cites no evidence");
    }
    for (j, id) in citations.iter().enumerate() {
        if !supporting.contains(id) && !contradicting.contains(id) {
            w.push(
                SchemaCode::OrphanCitation,
                format!("{path}.citations[{j}]"),
                format!("{id} not listed in supporting or contradicting ids"),
            );
        }
    }
    if let Some(claims) = obj.get("claims") {
        let Some(claims) = claims.as_array() else {
            w.push(SchemaCode::WrongType, join(path, "claims"), "expected array");
            return;
        };
        for (k, c) in claims.iter().enumerate() {
            claim(w, c, &format!("{path}.claims[{k}]"), &citations);
        }
    }
}

fn claim(w: &mut Walker, c: &Value, path: &str, citations: &[&str]) {
    let Some(obj) = c.as_object() else {
        w.push(SchemaCode::WrongType, path, format!("expected object, got {}", kind(c)));
        return;
    };
    w.unknown_fields(obj, CLAIM_FIELDS, path);
    let kind_str = w
        .required(obj, "kind", path)
        .and_then(|v| {
            w.enum_str(v, CLAIM_KINDS, &join(path, "kind"));
            v.as_str()
        })
        .filter(|k| CLAIM_KINDS.contains(k));
    if let Some(v) = w.required(obj, "evidence_id", path) {
        if let Some(id) = w.string(v, &join(path, "evidence_id")) {
            if !citations.contains(&id) {
                w.push(
                    SchemaCode::ClaimNotCited,
                    join(path, "evidence_id"),
                    format!("{id} is not cited by the enclosing paragraph"),
                );
            }
        }
    }
    if let Some(v) = w.required(obj, "field_path", path) {
        w.string(v, &join(path, "field_path"));
    }
    let comparator = obj.get("comparator");
    if let Some(cmp) = comparator {
        w.enum_str(cmp, COMPARATORS, &join(path, "comparator"));
    }
    let value = w.required(obj, "value", path);
    let Some(kind_str) = kind_str else { return };
    if let Some(value) = value {
        let ok = if kind_str == "entity" { value.is_string() } else { value.is_i64() };
        if !ok {
            w.push(
                SchemaCode::InvalidClaim,
                join(path, "value"),
                format!("{kind_str} claim has a {} value", kind(value)),
            );
        }
    }
    if kind_str == "threshold_comparison" && comparator.is_none() {
        w.push(SchemaCode::InvalidClaim, join(path, "comparator"), "threshold comparison without comparator");
    }
}

/// Convenience wrapper for typed records.
pub fn validate(record: &TriageRecord) -> Vec<SchemaViolation> {
    match serde_json::to_value(record) {
        Ok(v) => validate_record(&v),
        Err(e) => vec![SchemaViolation {
            code: SchemaCode::WrongType,
            path: String::new(),
            detail: e.to_string(),
        }],
    }
}
