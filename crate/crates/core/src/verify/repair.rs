//! Targeted feedback from reports and the bounded regenerate loop.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{VerificationReport, Verifier, Violation, ViolationCode};
use crate::generate::{GenerationError, TriageGenerator};
use crate::model::{format_major, format_timestamp, AlertContext, EvidenceBundle, TriageRecord};

pub const DEFAULT_MAX_ITERS: usize = 2;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("no feedback for a passing report")]
    PassingReport,
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

fn num(v: &Value) -> Option<i64> {
    v.as_i64()
}

fn field_words(v: &Violation) -> String {
    v.field_path.as_deref().map(|f| f.replace('_', " ")).unwrap_or_else(|| "amount".into())
}

fn message(v: &Violation) -> String {
    let id = v.evidence_id.as_deref().unwrap_or("the cited evidence");
    match v.code {
        ViolationCode::FabricatedCitation => format!("you referenced an evidence ID that is not present: {id}"),
        ViolationCode::UncitedParagraph => format!("{} cites no evidence; cite at least one evidence ID", v.path),
        ViolationCode::OrphanCitation => {
            format!("{id} is cited but listed neither in supporting_ids nor in contradicting_or_missing_ids")
        }
        ViolationCode::NumericMismatch => {
            let is_amount = !v.field_path.as_deref().is_some_and(|f| f.ends_with("count") || f.ends_with("sources"));
            let show = |x: Option<i64>| match (x, is_amount) {
                (Some(x), true) => format_major(x),
                (Some(x), false) => x.to_string(),
                (None, _) => "nothing".into(),
            };
            match num(&v.expected_value) {
                Some(e) => format!(
                    "your {} conflicts with evidence {id}: stated {}, evidence shows {}",
                    field_words(v),
                    show(num(&v.offending_value)),
                    show(Some(e))
                ),
                None => format!(
                    "your {} {} is not shown by evidence {id}",
                    field_words(v),
                    show(num(&v.offending_value))
                ),
            }
        }
        ViolationCode::TemporalMismatch => {
            let show = |x: Option<i64>| x.map(format_timestamp).unwrap_or_else(|| "nothing".into());
            format!(
                "your {} conflicts with evidence {id}: stated {}, evidence shows {}",
                field_words(v),
                show(num(&v.offending_value)),
                show(num(&v.expected_value))
            )
        }
        ViolationCode::ThresholdMismatch => format!(
            "your threshold comparison conflicts with evidence {id}: stated {} against a threshold of {}",
            num(&v.offending_value).map(format_major).unwrap_or_default(),
            num(&v.expected_value).map(format_major).unwrap_or_else(|| "nothing".into()),
        ),
        ViolationCode::UnsupportedAssertion => format!(
            "you mentioned {}, which no cited evidence contains",
            v.offending_value.as_str().unwrap_or("an entity")
        ),
        ViolationCode::PolicyHallucination => format!(
            "your statement \"{}\" is not supported by the cited policy {id}",
            v.offending_value.as_str().unwrap_or_default()
        ),
    }
}

/// One message per violation, in report order.
pub fn repair_feedback(report: &VerificationReport) -> Result<Vec<String>, VerifyError> {
    if report.passed {
        return Err(VerifyError::PassingReport);
    }
    Ok(report.violations.iter().map(message).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Verified,
    EscalateToHuman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub record: TriageRecord,
    pub report: VerificationReport,
    /// Feedback derived from this attempt's report; empty when it passed.
    pub feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairTrace {
    pub attempts: Vec<Attempt>,
    pub final_status: FinalStatus,
    /// Regenerations performed after the first attempt.
    pub iterations: usize,
}

impl RepairTrace {
    pub fn final_record(&self) -> &TriageRecord {
        &self.attempts.last().expect("at least one attempt").record
    }

    pub fn final_report(&self) -> &VerificationReport {
        &self.attempts.last().expect("at least one attempt").report
    }
}

/// Generate, verify, and regenerate with the accumulated feedback while
/// verification fails and the budget allows. A record that never verifies is still returned,
/// flagged for a human.
pub fn verify_repair_loop(
    generator: &dyn TriageGenerator,
    verifier: &Verifier,
    ctx: &AlertContext,
    bundle: &EvidenceBundle,
    max_iters: usize,
) -> Result<RepairTrace, GenerationError> {
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut feedback: Vec<String> = Vec::new();
    loop {
        let record = generator.generate(ctx, bundle, &feedback)?;
        let report = verifier.verify(&record, bundle);
        let next = repair_feedback(&report).unwrap_or_default();
        let passed = report.passed;
        attempts.push(Attempt { record, report, feedback: next.clone() });
        if passed || attempts.len() > max_iters {
            break;
        }
        feedback.extend(next);
    }
    let final_status = if attempts.last().is_some_and(|a| a.report.passed) {
        FinalStatus::Verified
    } else {
        FinalStatus::EscalateToHuman
    };
    Ok(RepairTrace { iterations: attempts.len() - 1, attempts, final_status })
}
