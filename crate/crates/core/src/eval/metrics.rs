//! Ranking, classification, provenance, counterfactual and safety metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Disposition, EvidenceBundle, SourceType, TriageRecord};
use crate::verify::{VerificationReport, ViolationCode};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("no positive labels")]
    NoPositives,
    #[error("target recall {0} outside [0,1]")]
    Target(f64),
}

fn check(scores: &[f64], labels: &[bool]) -> Result<usize, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length { scores: scores.len(), labels: labels.len() });
    }
    match labels.iter().filter(|l| **l).count() {
        0 => Err(MetricError::NoPositives),
        n => Ok(n),
    }
}

/// Indices by score descending, ties by index ascending.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    order
}

/// Step-wise average precision.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let n_pos = check(scores, labels)?;
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, i) in ranking(scores).into_iter().enumerate() {
        if labels[i] {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall of `score >= threshold` at every distinct score,
/// highest threshold first.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PrPoint>, MetricError> {
    let n_pos = check(scores, labels)? as f64;
    let order = ranking(scores);
    let mut out = Vec::new();
    let (mut tp, mut taken) = (0usize, 0usize);
    for (k, i) in order.iter().enumerate() {
        taken += 1;
        tp += usize::from(labels[*i]);
        let last_of_score = order.get(k + 1).is_none_or(|j| scores[*j] != scores[*i]);
        if last_of_score {
            out.push(PrPoint { threshold: scores[*i], precision: tp as f64 / taken as f64, recall: tp as f64 / n_pos });
        }
    }
    Ok(out)
}

/// Fraction of alerts at or above the largest threshold whose recall
/// reaches `target`.
pub fn workload_at_recall(scores: &[f64], labels: &[bool], target: f64) -> Result<f64, MetricError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(MetricError::Target(target));
    }
    let curve = pr_curve(scores, labels)?;
    let point = curve.iter().find(|p| p.recall >= target - 1e-12).unwrap_or(curve.last().expect("non-empty"));
    let routed = scores.iter().filter(|s| **s >= point.threshold).count();
    Ok(routed as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No predicted or no actual positives: some ratio was 0/0.
    pub degenerate: bool,
}

/// Precision, recall and F1 of the escalate class against suspicious labels.
pub fn escalate_prf(dispositions: &[Disposition], labels: &[bool]) -> Result<Prf, MetricError> {
    if dispositions.len() != labels.len() {
        return Err(MetricError::Length { scores: dispositions.len(), labels: labels.len() });
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (d, l) in dispositions.iter().zip(labels) {
        match (*d == Disposition::Escalate, *l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Prf { precision, recall, f1, degenerate: tp + fp == 0 || tp + fneg == 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub citation_validity: Option<f64>,
    pub evidence_support: Option<f64>,
    pub driver_coverage: Option<f64>,
    pub avg_citations: Option<f64>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

const SUPPORT_CODES: [ViolationCode; 4] = [
    ViolationCode::NumericMismatch,
    ViolationCode::TemporalMismatch,
    ViolationCode::ThresholdMismatch,
    ViolationCode::UnsupportedAssertion,
];

fn paragraph_of(path: &str) -> Option<usize> {
    path.strip_prefix("paragraphs[")?.split(']').next()?.parse().ok()
}

/// `items` pairs each record with its bundle and its audit-mode report.
/// Citation validity is micro-averaged over citation occurrences.
pub fn provenance_metrics(items: &[(&TriageRecord, &EvidenceBundle, &VerificationReport)]) -> Provenance {
    let (mut valid, mut total) = (0usize, 0usize);
    let (mut supported, mut paragraphs) = (0usize, 0usize);
    let (mut covered, mut escalations) = (0usize, 0usize);
    let mut distinct = 0usize;
    for (record, bundle, report) in items {
        for c in record.citations() {
            total += 1;
            valid += usize::from(bundle.contains(c));
        }
        let failing: BTreeSet<usize> = report
            .violations
            .iter()
            .filter(|v| SUPPORT_CODES.contains(&v.code))
            .filter_map(|v| paragraph_of(&v.path))
            .collect();
        for (i, p) in record.paragraphs.iter().enumerate() {
            paragraphs += 1;
            let claims_resolve = p.claims.iter().all(|c| bundle.contains(&c.evidence_id));
            if !failing.contains(&i) && claims_resolve {
                supported += 1;
            }
        }
        let cited = record.cited_ids();
        distinct += cited.len();
        if record.disposition == Disposition::Escalate {
            escalations += 1;
            let ty = |id: &str| SourceType::from_evidence_id(id);
            let policy = cited.iter().any(|c| ty(c) == Some(SourceType::Policy));
            let other = cited.iter().any(|c| ty(c).is_some_and(|t| t != SourceType::Policy));
            covered += usize::from(policy && other);
        }
    }
    Provenance {
        citation_validity: rate(valid, total),
        evidence_support: rate(supported, paragraphs),
        driver_coverage: rate(covered, escalations),
        avg_citations: (!items.is_empty()).then(|| distinct as f64 / items.len() as f64),
    }
}

/// What one alert contributed to the counterfactual metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CfAlertResult {
    pub attempted: bool,
    pub flipped: bool,
    pub removal_tests: usize,
    pub removal_faithful: usize,
    /// Stability fraction, when probes ran.
    pub stability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CfMetrics {
    pub cf_flip_rate: Option<f64>,
    pub cf_removal_faithfulness: Option<f64>,
    /// Macro mean over alerts.
    pub cf_stability: Option<f64>,
}

pub fn cf_metrics(results: &[CfAlertResult]) -> CfMetrics {
    let attempted = results.iter().filter(|r| r.attempted).count();
    let flipped = results.iter().filter(|r| r.attempted && r.flipped).count();
    let tests: usize = results.iter().map(|r| r.removal_tests).sum();
    let faithful: usize = results.iter().map(|r| r.removal_faithful).sum();
    let stab: Vec<f64> = results.iter().filter_map(|r| r.stability).collect();
    CfMetrics {
        cf_flip_rate: rate(flipped, attempted),
        cf_removal_faithfulness: rate(faithful, tests),
        cf_stability: (!stab.is_empty()).then(|| stab.iter().sum::<f64>() / stab.len() as f64),
    }
}

pub const NUMERIC_CODES: [ViolationCode; 3] =
    [ViolationCode::NumericMismatch, ViolationCode::TemporalMismatch, ViolationCode::ThresholdMismatch];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Safety {
    pub numerical_inconsistency_rate: Option<f64>,
    pub policy_hallucination_rate: Option<f64>,
    pub unsupported_assertion_rate: Option<f64>,
    pub adversarial_uncertainty_rate: Option<f64>,
}

/// Record-level rates over audit-mode reports; `adversarial` holds one
/// flag per degraded alert, true when the record stayed uncertain.
pub fn safety_metrics(reports: &[&VerificationReport], adversarial: &[bool]) -> Safety {
    let frac = |f: &dyn Fn(&VerificationReport) -> bool| rate(reports.iter().filter(|r| f(r)).count(), reports.len());
    Safety {
        numerical_inconsistency_rate: frac(&|r| NUMERIC_CODES.iter().any(|c| r.has(*c))),
        policy_hallucination_rate: frac(&|r| r.has(ViolationCode::PolicyHallucination)),
        unsupported_assertion_rate: frac(&|r| r.has(ViolationCode::UnsupportedAssertion)),
        adversarial_uncertainty_rate: rate(adversarial.iter().filter(|a| **a).count(), adversarial.len()),
    }
}
