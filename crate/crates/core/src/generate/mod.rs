//! Triage record generation under the provenance contract.
//!
//! Three generators share one interface: a deterministic reference generator
//! whose decision mirrors the validator table, a fault-injection generator
//! with controlled error rates, and an adapter to an external process.

mod adapter;
mod draft;
mod faults;
mod prompt;
mod reference;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapter::{Adapter, AdapterConfig, AdapterError, Endpoint};
pub use faults::{contains_token, FaultRates, UNSUPPORTED_POLICY_SENTENCES};
pub use prompt::{
    alert_summary, render_prompt, transactions_summary, EvidenceBlock, EvidenceEntry, PromptDocument,
    OUTPUT_CONTRACT,
};
pub use reference::{ACTION_LOOKBACK, ACTION_MISSING};

use crate::canonical::{parse_record, CanonicalError};
use crate::model::{AlertContext, EvidenceBundle, EvidenceItem, TriageRecord};
use crate::rng::{hash_label, unit};
use crate::simgen::alert_items;
use crate::schema::SchemaViolation;
use crate::validator::ValidatorTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    Reference,
    FaultInjection,
    External,
}

impl GeneratorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorMode::Reference => "reference",
            GeneratorMode::FaultInjection => "fault_injection",
            GeneratorMode::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub mode: GeneratorMode,
    #[serde(default)]
    pub faults: FaultRates,
    #[serde(default)]
    pub fault_seed: u64,
    /// Probability that a fault-injection generator returns a clean record
    /// when given repair feedback. At 0 it repeats the same faults.
    #[serde(default)]
    pub heed_feedback: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<AdapterConfig>,
    /// Closed-book mode: no retrieved bundle. The generator sees the static
    /// policy manual and the alert's own trigger and slice rebuilt from the
    /// alert, and nothing else.
    #[serde(default)]
    pub llm_only: bool,
    #[serde(default)]
    pub table: ValidatorTable,
}

impl GeneratorConfig {
    pub fn reference() -> Self {
        Self::default()
    }

    pub fn faulty(faults: FaultRates, seed: u64) -> Self {
        Self { mode: GeneratorMode::FaultInjection, faults, fault_seed: seed, ..Self::default() }
    }

    pub fn check(&self) -> Result<(), GenerationError> {
        for (name, p) in self.faults.all() {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenerationError::Config(format!("{name} = {p} outside [0,1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.heed_feedback) {
            return Err(GenerationError::Config(format!("heed_feedback = {} outside [0,1]", self.heed_feedback)));
        }
        if self.mode == GeneratorMode::External && self.external.is_none() {
            return Err(GenerationError::Config("external mode needs an endpoint".into()));
        }
        self.table.check().map_err(|e| GenerationError::Config(e.to_string()))
    }

    pub fn tag(&self) -> String {
        let mut t = self.mode.as_str().to_string();
        if self.llm_only {
            t.push_str("+llm_only");
        }
        t
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("bundle for {bundle} given with alert {alert}")]
    BundleMismatch { bundle: String, alert: String },
    #[error("adapter: {0}")]
    Adapter(#[from] AdapterError),
    #[error("unparseable reply at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("reply violates the record schema ({} violations)", .0.len())]
    Schema(Vec<SchemaViolation>),
    #[error("reply is for alert {got}, expected {expected}")]
    WrongAlert { expected: String, got: String },
}

impl GenerationError {
    /// Transport-level failures; distinct from verification failures and
    /// from malformed replies.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenerationError::Adapter(e) if e.is_retryable())
    }
}

/// Anything that turns an alert and its bundle into a record.
pub trait TriageGenerator: Send + Sync {
    fn generate(
        &self,
        ctx: &AlertContext,
        bundle: &EvidenceBundle,
        feedback: &[String],
    ) -> Result<TriageRecord, GenerationError>;

    fn tag(&self) -> String;
}

/// Resources a generator may draw on outside the bundle: the entity lexicon
/// and the policy corpus (fault injection only).
#[derive(Debug, Clone, Default)]
pub struct GenEnv {
    pub lexicon: Vec<String>,
    pub policies: Vec<EvidenceItem>,
}

pub struct Generator {
    config: GeneratorConfig,
    env: Arc<GenEnv>,
    adapter: Option<Adapter>,
}

impl Generator {
    pub fn new(config: GeneratorConfig, env: Arc<GenEnv>) -> Result<Self, GenerationError> {
        config.check()?;
        let adapter = match config.mode {
            GeneratorMode::External => config.external.clone().map(Adapter::new),
            _ => None,
        };
        Ok(Self { config, env, adapter })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn visible_bundle(&self, ctx: &AlertContext, bundle: &EvidenceBundle) -> EvidenceBundle {
        if self.config.llm_only {
            let mut items = self.env.policies.clone();
            items.extend(alert_items(ctx));
            let mut b = EvidenceBundle { alert_id: bundle.alert_id.clone(), items, quota: bundle.quota.clone(), retrieval_trace: vec![] };
            b.normalize();
            b
        } else {
            bundle.clone()
        }
    }

    fn heeds(&self, alert_id: &str, feedback: &[String]) -> bool {
        if feedback.is_empty() || self.config.heed_feedback <= 0.0 {
            return false;
        }
        let key = format!("heed:{alert_id}:{:016x}", hash_label(&feedback.join("\n")));
        unit(self.config.fault_seed, &key, 0) < self.config.heed_feedback
    }

    fn external(&self, ctx: &AlertContext, bundle: &EvidenceBundle, feedback: &[String]) -> Result<TriageRecord, GenerationError> {
        let adapter = self.adapter.as_ref().ok_or_else(|| GenerationError::Config("no adapter".into()))?;
        let mut prompt = render_prompt(ctx, bundle, feedback)?;
        if self.config.llm_only {
            prompt.alert_summary = transactions_summary(ctx);
        }
        let reply = adapter.call(&prompt)?;
        let record = parse_record(&reply).map_err(|e| match e {
            CanonicalError::Parse { line, column, message } => GenerationError::Parse { line, column, message },
            CanonicalError::Invalid(v) => GenerationError::Schema(v),
            CanonicalError::Serialize(message) => GenerationError::Parse { line: 0, column: 0, message },
        })?;
        if record.alert_id != ctx.alert.id {
            return Err(GenerationError::WrongAlert { expected: ctx.alert.id.clone(), got: record.alert_id });
        }
        Ok(record)
    }
}

impl TriageGenerator for Generator {
    fn generate(
        &self,
        ctx: &AlertContext,
        bundle: &EvidenceBundle,
        feedback: &[String],
    ) -> Result<TriageRecord, GenerationError> {
        if bundle.alert_id != ctx.alert.id {
            return Err(GenerationError::BundleMismatch { bundle: bundle.alert_id.clone(), alert: ctx.alert.id.clone() });
        }
        let visible = self.visible_bundle(ctx, bundle);
        match self.config.mode {
            GeneratorMode::External => self.external(ctx, &visible, feedback),
            GeneratorMode::Reference => Ok(reference::reference_draft(ctx, &visible, &self.config.table).finish(&self.tag())),
            GeneratorMode::FaultInjection => {
                let mut draft = reference::reference_draft(ctx, &visible, &self.config.table);
                if !self.heeds(&ctx.alert.id, feedback) {
                    let pools = faults::FaultPools { lexicon: &self.env.lexicon, policies: &self.env.policies };
                    faults::inject(&mut draft, &self.config.faults, self.config.fault_seed, &visible, &pools);
                }
                Ok(draft.finish(&self.tag()))
            }
        }
    }

    fn tag(&self) -> String {
        self.config.tag()
    }
}

#[cfg(test)]
mod tests;
