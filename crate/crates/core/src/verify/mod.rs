//! Provenance and consistency checks on triage records, repair feedback and
//! the bounded verify-repair loop.

mod repair;

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use repair::{repair_feedback, verify_repair_loop, Attempt, FinalStatus, RepairTrace, VerifyError, DEFAULT_MAX_ITERS};

use crate::evidence::{token_set, EvidenceIndex};
use crate::generate::contains_token;
use crate::model::{
    ClaimKind, ClaimValue, Comparator, EvidenceBundle, EvidenceItem, FieldValue, SourceType, TriageRecord,
};
use crate::text::{content_token_set, is_stopword, sentences};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    FabricatedCitation,
    UncitedParagraph,
    NumericMismatch,
    TemporalMismatch,
    ThresholdMismatch,
    UnsupportedAssertion,
    PolicyHallucination,
    OrphanCitation,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::FabricatedCitation => "FABRICATED_CITATION",
            ViolationCode::UncitedParagraph => "UNCITED_PARAGRAPH",
            ViolationCode::NumericMismatch => "NUMERIC_MISMATCH",
            ViolationCode::TemporalMismatch => "TEMPORAL_MISMATCH",
            ViolationCode::ThresholdMismatch => "THRESHOLD_MISMATCH",
            ViolationCode::UnsupportedAssertion => "UNSUPPORTED_ASSERTION",
            ViolationCode::PolicyHallucination => "POLICY_HALLUCINATION",
            ViolationCode::OrphanCitation => "ORPHAN_CITATION",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_id: Option<String>,
    /// Field the claim was checked against, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_path: Option<String>,
    #[serde(default)]
    pub offending_value: Value,
    #[serde(default)]
    pub expected_value: Value,
}

impl Violation {
    fn new(code: ViolationCode, path: String, detail: String) -> Self {
        Self { code, path, detail, evidence_id: None, field_path: None, offending_value: Value::Null, expected_value: Value::Null }
    }

    fn evidence(mut self, id: &str) -> Self {
        self.evidence_id = Some(id.to_string());
        self
    }

    fn values(mut self, offending: Value, expected: Value) -> Self {
        self.offending_value = offending;
        self.expected_value = expected;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub record_id: String,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn codes(&self) -> BTreeSet<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }
}

static ENTITY_PATTERN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:acc|cust)-\d+\b").expect("regex"));
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9][A-Za-z0-9_-]*[A-Za-z0-9]").expect("regex"));
static CURRENCY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\$[0-9]{1,3}(?:,[0-9]{3})*\.[0-9]{2}").expect("regex"));

/// Parses `$11,700.00` into minor units.
pub fn parse_currency(s: &str) -> Option<i64> {
    let neg = s.starts_with('-');
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    let v: i64 = digits.parse().ok()?;
    Some(if neg { -v } else { v })
}

/// Corpus-level knowledge the checks need: the closed entity lexicon,
/// document frequencies for deciding which tokens are distinctive, and the
/// policy manual.
#[derive(Debug, Clone, Default)]
pub struct Verifier {
    lexicon: BTreeSet<String>,
    doc_freq: HashMap<String, usize>,
    n_docs: usize,
    policies: HashMap<String, EvidenceItem>,
}

impl Verifier {
    pub fn new(lexicon: impl IntoIterator<Item = String>, corpus: &[EvidenceItem]) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for item in corpus {
            for t in token_set(&item.canonical_text) {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        let policies = corpus
            .iter()
            .filter(|e| e.source_type == SourceType::Policy)
            .map(|e| (e.id.clone(), e.clone()))
            .collect();
        Self { lexicon: lexicon.into_iter().collect(), doc_freq, n_docs: corpus.len(), policies }
    }

    pub fn from_index(index: &EvidenceIndex, lexicon: impl IntoIterator<Item = String>) -> Self {
        Self::new(lexicon, index.items())
    }

    pub fn lexicon(&self) -> &BTreeSet<String> {
        &self.lexicon
    }

    /// Non-stopword token present in fewer than half the corpus documents.
    pub fn is_distinctive(&self, token: &str) -> bool {
        if is_stopword(token) {
            return false;
        }
        let df = self.doc_freq.get(token).copied().unwrap_or(0);
        (df as f64) < 0.5 * self.n_docs as f64
    }

    /// Entity mentions in `text`: lexicon members and anything shaped like an
    /// account or customer id.
    pub fn entities(&self, text: &str) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = ENTITY_PATTERN.find_iter(text).map(|m| m.as_str().to_string()).collect();
        for m in WORD.find_iter(text) {
            if self.lexicon.contains(m.as_str()) {
                out.insert(m.as_str().to_string());
            }
        }
        out
    }

    /// Runs every check in a fixed order. Never modifies the record.
    pub fn verify(&self, record: &TriageRecord, bundle: &EvidenceBundle) -> VerificationReport {
        let mut v = Vec::new();
        check_citations(record, bundle, &mut v);
        check_uncited(record, &mut v);
        check_orphans(record, &mut v);
        check_claims(record, bundle, &mut v);
        self.check_entities(record, bundle, &mut v);
        self.check_policy(record, bundle, &mut v);
        VerificationReport { record_id: record.alert_id.clone(), passed: v.is_empty(), violations: v }
    }

    fn check_entities(&self, record: &TriageRecord, bundle: &EvidenceBundle, out: &mut Vec<Violation>) {
        for (i, p) in record.paragraphs.iter().enumerate() {
            let cited: Vec<&EvidenceItem> = p.citations.iter().filter_map(|c| bundle.get(c)).collect();
            for e in self.entities(&p.text) {
                if !cited.iter().any(|item| contains_token(&item.canonical_text, &e)) {
                    out.push(
                        Violation::new(
                            ViolationCode::UnsupportedAssertion,
                            format!("paragraphs[{i}].text"),
                            format!("entity {e} appears in no cited evidence"),
                        )
                        .values(json!(e), Value::Null),
                    );
                }
            }
            for (j, c) in p.claims.iter().enumerate() {
                if c.kind != ClaimKind::Entity {
                    continue;
                }
                let Some(item) = bundle.get(&c.evidence_id) else { continue };
                let stated = match &c.value {
                    ClaimValue::Text(s) => s.clone(),
                    ClaimValue::Number(n) => n.to_string(),
                };
                let expected = item.structured_fields.get(&c.field_path).map(FieldValue::render);
                if expected.as_deref() != Some(stated.as_str()) {
                    out.push(
                        Violation::new(
                            ViolationCode::UnsupportedAssertion,
                            format!("paragraphs[{i}].claims[{j}]"),
                            format!("entity claim does not match {}.{}", c.evidence_id, c.field_path),
                        )
                        .evidence(&c.evidence_id)
                        .values(json!(stated), expected.map(Value::from).unwrap_or(Value::Null)),
                    );
                }
            }
        }
    }

    /// A cited policy outside the bundle is still judged against its text
    /// in the manual.
    fn check_policy(&self, record: &TriageRecord, bundle: &EvidenceBundle, out: &mut Vec<Violation>) {
        for (i, p) in record.paragraphs.iter().enumerate() {
            let policies: Vec<&EvidenceItem> = p
                .citations
                .iter()
                .filter_map(|c| bundle.get(c).or_else(|| self.policies.get(c)))
                .filter(|e| e.source_type == SourceType::Policy)
                .collect();
            if policies.is_empty() {
                continue;
            }
            let support: BTreeSet<String> = policies.iter().flat_map(|e| content_token_set(&e.canonical_text)).collect();
            for (k, s) in sentences(&p.text).into_iter().enumerate() {
                let backed = content_token_set(s).iter().any(|t| self.is_distinctive(t) && support.contains(t));
                if !backed {
                    let ids: Vec<&str> = policies.iter().map(|e| e.id.as_str()).collect();
                    out.push(
                        Violation::new(
                            ViolationCode::PolicyHallucination,
                            format!("paragraphs[{i}].text.sentences[{k}]"),
                            format!("sentence shares no distinctive token with cited policy {}", ids.join(", ")),
                        )
                        .evidence(ids[0])
                        .values(json!(s), Value::Null),
                    );
                }
            }
        }
    }
}

fn check_citations(record: &TriageRecord, bundle: &EvidenceBundle, out: &mut Vec<Violation>) {
    for (i, p) in record.paragraphs.iter().enumerate() {
        for (j, c) in p.citations.iter().enumerate() {
            if !bundle.contains(c) {
                out.push(
                    Violation::new(ViolationCode::FabricatedCitation, format!("paragraphs[{i}].citations[{j}]"), format!("{c} is not in the bundle"))
                        .evidence(c)
                        .values(json!(c), Value::Null),
                );
            }
        }
    }
}

fn check_uncited(record: &TriageRecord, out: &mut Vec<Violation>) {
    for (i, p) in record.paragraphs.iter().enumerate() {
        if p.citations.is_empty() {
            out.push(Violation::new(ViolationCode::UncitedParagraph, format!("paragraphs[{i}]"), "paragraph cites no evidence".into()));
        }
    }
}

fn check_orphans(record: &TriageRecord, out: &mut Vec<Violation>) {
    let listed: BTreeSet<&str> = record
        .supporting_ids
        .iter()
        .chain(&record.contradicting_or_missing_ids)
        .map(String::as_str)
        .collect();
    for (i, p) in record.paragraphs.iter().enumerate() {
        for (j, c) in p.citations.iter().enumerate() {
            if !listed.contains(c.as_str()) {
                out.push(
                    Violation::new(
                        ViolationCode::OrphanCitation,
                        format!("paragraphs[{i}].citations[{j}]"),
                        format!("{c} is listed neither as supporting nor as contradicting"),
                    )
                    .evidence(c),
                );
            }
        }
    }
}

fn check_claims(record: &TriageRecord, bundle: &EvidenceBundle, out: &mut Vec<Violation>) {
    for (i, p) in record.paragraphs.iter().enumerate() {
        let mut claimed_text: Vec<String> = Vec::new();
        for (j, c) in p.claims.iter().enumerate() {
            let path = format!("paragraphs[{i}].claims[{j}]");
            let Some(item) = bundle.get(&c.evidence_id) else { continue };
            let ClaimValue::Number(stated) = c.value else {
                if c.kind != ClaimKind::Entity {
                    out.push(
                        Violation::new(code_for(c.kind), path, "non-numeric value in a numeric claim".into())
                            .evidence(&c.evidence_id)
                            .values(serde_json::to_value(&c.value).unwrap_or(Value::Null), Value::Null),
                    );
                }
                continue;
            };
            if matches!(c.kind, ClaimKind::Amount | ClaimKind::ThresholdComparison) {
                claimed_text.push(crate::model::format_currency(stated));
            }
            let field = item.structured_fields.get(&c.field_path);
            let expected = field.and_then(|f| match f {
                FieldValue::Amount(a) | FieldValue::Timestamp(a) => Some(*a),
                FieldValue::Count(n) => Some(*n as i64),
                _ => None,
            });
            let mut violation = |detail: String, expected: Value| {
                let mut v = Violation::new(code_for(c.kind), path.clone(), detail)
                    .evidence(&c.evidence_id)
                    .values(json!(stated), expected);
                v.field_path = Some(c.field_path.clone());
                out.push(v);
            };
            match (c.kind, expected) {
                (ClaimKind::ThresholdComparison, Some(thr)) => {
                    let cmp = c.comparator.unwrap_or(Comparator::Gt);
                    if !cmp.holds(stated, thr) {
                        violation(format!("{stated} {cmp:?} {thr} does not hold"), json!(thr));
                    }
                }
                (_, Some(e)) if e == stated => {}
                (_, Some(e)) => violation(format!("stated {stated}, {}.{} is {e}", c.evidence_id, c.field_path), json!(e)),
                (_, None) => violation(format!("{} has no numeric field {}", c.evidence_id, c.field_path), Value::Null),
            }
        }
        currency_fallback(i, p, &claimed_text, bundle, out);
    }
}

fn code_for(kind: ClaimKind) -> ViolationCode {
    match kind {
        ClaimKind::Timestamp => ViolationCode::TemporalMismatch,
        ClaimKind::ThresholdComparison => ViolationCode::ThresholdMismatch,
        _ => ViolationCode::NumericMismatch,
    }
}

/// Currency amounts written into the text without a claim must equal an
/// amount field of some cited item.
fn currency_fallback(
    i: usize,
    p: &crate::model::RationaleParagraph,
    claimed: &[String],
    bundle: &EvidenceBundle,
    out: &mut Vec<Violation>,
) {
    let mut unclaimed: Vec<&str> = CURRENCY.find_iter(&p.text).map(|m| m.as_str()).collect();
    for c in claimed {
        if let Some(pos) = unclaimed.iter().position(|u| u == c) {
            unclaimed.remove(pos);
        }
    }
    if unclaimed.is_empty() {
        return;
    }
    let cited: Vec<&EvidenceItem> = p.citations.iter().filter_map(|c| bundle.get(c)).collect();
    let known: BTreeSet<i64> = cited
        .iter()
        .flat_map(|e| e.structured_fields.values())
        .filter_map(|f| match f {
            FieldValue::Amount(a) => Some(*a),
            _ => None,
        })
        .collect();
    for u in unclaimed {
        let Some(v) = parse_currency(u) else { continue };
        if !known.contains(&v) {
            let mut viol = Violation::new(
                ViolationCode::NumericMismatch,
                format!("paragraphs[{i}].text"),
                format!("amount {u} matches no field of the cited evidence"),
            )
            .values(json!(v), Value::Null);
            if let Some(first) = cited.first() {
                viol.evidence_id = Some(first.id.clone());
            }
            out.push(viol);
        }
    }
}
