//! Shared domain types: evidence items, alerts and their context, and the
//! structured triage record.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Unix epoch seconds, UTC.
pub type Timestamp = i64;

/// Currency minor units (cents).
pub type Amount = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    Policy,
    Kyc,
    Trigger,
    Transaction,
    Case,
}

impl SourceType {
    pub const ALL: [SourceType; 5] = [
        SourceType::Policy,
        SourceType::Kyc,
        SourceType::Trigger,
        SourceType::Transaction,
        SourceType::Case,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceType::Policy => "policy",
            SourceType::Kyc => "kyc",
            SourceType::Trigger => "trigger",
            SourceType::Transaction => "transaction",
            SourceType::Case => "case",
        }
    }

    /// Parses the `<type>` segment of an `ev-<type>-<seq>` identifier.
    pub fn from_evidence_id(id: &str) -> Option<SourceType> {
        let rest = id.strip_prefix("ev-")?;
        let ty = rest.split('-').next()?;
        SourceType::ALL.into_iter().find(|t| t.as_str() == ty)
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Access-control label. Ordering is the clearance order
/// `public < restricted < confidential`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AclTag {
    Public,
    Restricted,
    Confidential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskTier {
    Low,
    Medium,
    High,
}

impl RiskTier {
    pub const ALL: [RiskTier; 3] = [RiskTier::Low, RiskTier::Medium, RiskTier::High];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskTier::Low => "low",
            RiskTier::Medium => "medium",
            RiskTier::High => "high",
        }
    }
}

/// A typed structured-field value on an evidence item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldValue {
    Amount(Amount),
    Timestamp(Timestamp),
    Counterparty(String),
    RiskTier(RiskTier),
    Count(u64),
}

impl FieldValue {
    /// The verbatim text form used inside canonical texts and rationales.
    pub fn render(&self) -> String {
        match self {
            FieldValue::Amount(a) => format_currency(*a),
            FieldValue::Timestamp(t) => format_timestamp(*t),
            FieldValue::Counterparty(c) => c.clone(),
            FieldValue::RiskTier(t) => t.as_str().to_string(),
            FieldValue::Count(c) => c.to_string(),
        }
    }
}

/// `$11,700.00` for 1_170_000 minor units.
pub fn format_currency(minor: Amount) -> String {
    let sign = if minor < 0 { "-" } else { "" };
    let abs = minor.unsigned_abs();
    let major = (abs / 100).to_string();
    let mut grouped = String::with_capacity(major.len() + major.len() / 3);
    for (i, ch) in major.chars().enumerate() {
        if i > 0 && (major.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    format!("{sign}${grouped}.{:02}", abs % 100)
}

/// `117.00` for 11_700 minor units (no symbol, no grouping).
pub fn format_major(minor: Amount) -> String {
    let sign = if minor < 0 { "-" } else { "" };
    let abs = minor.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

pub fn format_timestamp(t: Timestamp) -> String {
    match chrono::DateTime::from_timestamp(t, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

/// Scoping metadata used by the structured filter. Not every field applies
/// to every source type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceScope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customer_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(Timestamp, Timestamp)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert_type: Option<AlertType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub id: String,
    pub source_type: SourceType,
    pub effective_time: Timestamp,
    pub acl_tag: AclTag,
    pub canonical_text: String,
    #[serde(default)]
    pub structured_fields: BTreeMap<String, FieldValue>,
    #[serde(default)]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<String>,
    #[serde(default)]
    pub scope: EvidenceScope,
}

impl EvidenceItem {
    /// Checks the per-item invariants: non-empty text, every structured value
    /// rendered verbatim in the text, non-negative amounts.
    pub fn check(&self) -> Result<(), String> {
        if self.canonical_text.is_empty() {
            return Err(format!("{}: empty canonical_text", self.id));
        }
        if SourceType::from_evidence_id(&self.id) != Some(self.source_type) {
            return Err(format!("{}: id does not match source type {}", self.id, self.source_type));
        }
        for (path, value) in &self.structured_fields {
            if let FieldValue::Amount(a) = value {
                if *a < 0 {
                    return Err(format!("{}: negative amount at {path}", self.id));
                }
            }
            if !self.canonical_text.contains(&value.render()) {
                return Err(format!("{}: field {path} not rendered in text", self.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Wire,
    Cash,
    Ach,
    Internal,
}

/// Source account used for over-the-counter cash deposits.
pub const CASH_SOURCE: &str = "cash-counter";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub timestamp: Timestamp,
    pub amount: Amount,
    pub src_account: String,
    pub dst_account: String,
    pub channel: Channel,
    /// ISO-3166 alpha-2 code of the counterparty's jurisdiction.
    pub geography: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertType {
    Structuring,
    RapidMovement,
    HighRiskCounterparty,
    FanIn,
}

impl AlertType {
    pub const ALL: [AlertType; 4] = [
        AlertType::Structuring,
        AlertType::RapidMovement,
        AlertType::HighRiskCounterparty,
        AlertType::FanIn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlertType::Structuring => "structuring",
            AlertType::RapidMovement => "rapid_movement",
            AlertType::HighRiskCounterparty => "high_risk_counterparty",
            AlertType::FanIn => "fan_in",
        }
    }

    /// The indicator that corresponds to this typology.
    pub fn indicator(self) -> Indicator {
        match self {
            AlertType::Structuring => Indicator::StructuringPattern,
            AlertType::RapidMovement => Indicator::RapidMovement,
            AlertType::HighRiskCounterparty => Indicator::HighRiskCounterparty,
            AlertType::FanIn => Indicator::FanIn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Suspicious,
    Normal,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerMetadata {
    pub rule_ids: Vec<String>,
    pub rule_scores: BTreeMap<String, f64>,
    /// Rule thresholds, in minor units.
    pub thresholds: BTreeMap<String, Amount>,
}

impl TriggerMetadata {
    pub fn max_score(&self) -> f64 {
        self.rule_scores.values().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub id: String,
    pub customer_id: String,
    pub alert_time: Timestamp,
    pub window: (Timestamp, Timestamp),
    pub trigger: TriggerMetadata,
    pub transaction_ids: Vec<String>,
    pub alert_type: AlertType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomerType {
    Individual,
    Business,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub customer_id: String,
    pub customer_type: CustomerType,
    pub industry_code: String,
    pub risk_rating: RiskTier,
    pub onboarding_time: Timestamp,
    pub prior_alert_count: u32,
}

/// Named, fact-derived risk indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    StructuringPattern,
    RapidMovement,
    HighRiskCounterparty,
    FanIn,
    PriorAlerts,
}

impl Indicator {
    pub const ALL: [Indicator; 5] = [
        Indicator::StructuringPattern,
        Indicator::RapidMovement,
        Indicator::HighRiskCounterparty,
        Indicator::FanIn,
        Indicator::PriorAlerts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Indicator::StructuringPattern => "structuring_pattern",
            Indicator::RapidMovement => "rapid_movement",
            Indicator::HighRiskCounterparty => "high_risk_counterparty",
            Indicator::FanIn => "fan_in",
            Indicator::PriorAlerts => "prior_alerts",
        }
    }

    pub fn from_name(name: &str) -> Option<Indicator> {
        Indicator::ALL.into_iter().find(|i| i.as_str() == name)
    }

    /// Phrase used when a rationale names this indicator as a driver.
    pub fn phrase(self) -> &'static str {
        match self {
            Indicator::StructuringPattern => "structuring",
            Indicator::RapidMovement => "rapid movement",
            Indicator::HighRiskCounterparty => "high-risk counterparty",
            Indicator::FanIn => "fan-in",
            Indicator::PriorAlerts => "prior alerts",
        }
    }

    pub fn typology(self) -> Option<AlertType> {
        AlertType::ALL.into_iter().find(|t| t.indicator() == self)
    }
}

/// Parameters the indicator functions read; carried on every context so that
/// indicators stay a pure function of the context's facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorParams {
    pub structuring_threshold: Amount,
    pub high_risk_geos: Vec<String>,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            structuring_threshold: 1_000_000,
            high_risk_geos: vec!["IR".into(), "KP".into(), "MM".into(), "SY".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertContext {
    pub alert: Alert,
    pub transactions: Vec<Transaction>,
    pub customer: CustomerProfile,
    /// The customer's own account.
    pub account_id: String,
    pub indicators: BTreeMap<Indicator, bool>,
    pub counterparty_risk: BTreeMap<String, RiskTier>,
    pub params: IndicatorParams,
}

impl AlertContext {
    pub fn is_active(&self, indicator: Indicator) -> bool {
        self.indicators.get(&indicator).copied().unwrap_or(false)
    }

    pub fn active_indicators(&self) -> Vec<Indicator> {
        Indicator::ALL.into_iter().filter(|i| self.is_active(*i)).collect()
    }

    /// Recomputes `indicators` from the current facts.
    pub fn refresh_indicators(&mut self) {
        self.indicators = crate::indicators::compute(self);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Dismiss,
    Monitor,
    Escalate,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Dismiss => "dismiss",
            Disposition::Monitor => "monitor",
            Disposition::Escalate => "escalate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Amount,
    Timestamp,
    Count,
    ThresholdComparison,
    Entity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClaimValue {
    Number(i64),
    Text(String),
}

/// A machine-checkable assertion inside a rationale paragraph.
///
/// For `threshold_comparison`, `value` is the stated quantity and the claim
/// asserts `value <comparator> cited[field_path]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub kind: ClaimKind,
    pub value: ClaimValue,
    pub evidence_id: String,
    pub field_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparator: Option<Comparator>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleParagraph {
    pub text: String,
    pub citations: Vec<String>,
    #[serde(default)]
    pub claims: Vec<Claim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageRecord {
    pub alert_id: String,
    pub disposition: Disposition,
    pub confidence: f64,
    pub typologies: Vec<AlertType>,
    pub paragraphs: Vec<RationaleParagraph>,
    pub supporting_ids: Vec<String>,
    pub contradicting_or_missing_ids: Vec<String>,
    pub unknowns: Vec<String>,
    pub next_actions: Vec<String>,
    pub generator_tag: String,
}

impl TriageRecord {
    /// Every citation occurrence across paragraphs, in order.
    pub fn citations(&self) -> impl Iterator<Item = &str> {
        self.paragraphs.iter().flat_map(|p| p.citations.iter().map(String::as_str))
    }

    /// Distinct cited ids, sorted.
    pub fn cited_ids(&self) -> std::collections::BTreeSet<&str> {
        self.citations().collect()
    }
}

/// The permission-filtered, quota'd evidence handed to a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub alert_id: String,
    pub items: Vec<EvidenceItem>,
    pub quota: BTreeMap<SourceType, usize>,
    pub retrieval_trace: Vec<TraceEntry>,
}

impl EvidenceBundle {
    pub fn get(&self, id: &str) -> Option<&EvidenceItem> {
        self.items.iter().find(|e| e.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn of_type(&self, ty: SourceType) -> impl Iterator<Item = &EvidenceItem> {
        self.items.iter().filter(move |e| e.source_type == ty)
    }

    pub fn has_type(&self, ty: SourceType) -> bool {
        self.of_type(ty).next().is_some()
    }

    /// Re-establishes the grouping order: by source type, then id.
    pub fn normalize(&mut self) {
        self.items
            .sort_by(|a, b| (a.source_type, &a.id).cmp(&(b.source_type, &b.id)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    Selected,
    Coverage,
    Duplicate,
    QuotaFull,
    TotalCapReached,
    /// Marker entry: nothing survived filtering and selection.
    EmptyBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFlags {
    pub acl: bool,
    pub time: bool,
    pub scope: bool,
    pub current_version: bool,
}

impl FilterFlags {
    pub fn passed(&self) -> bool {
        self.acl && self.time && self.scope && self.current_version
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub item_id: String,
    pub filters: FilterFlags,
    pub score: f64,
    pub reason: SelectionReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
}
