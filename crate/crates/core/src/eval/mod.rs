//! Evaluation: metrics, the linear baseline, the experiment runner and the
//! comparison outputs.

mod experiment;
mod linear;
mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use experiment::{
    degrade, is_suspicious, par_map, removal_tests, run_experiment, stays_uncertain, Degradation, EvalData, ExperimentConfig, VariantRun,
    CONFLICT_DELTA, DEFAULT_WORKLOAD_TARGETS,
};
pub use linear::{features, Features, LinearScorer, EPOCHS, FEATURE_NAMES, N_FEATURES, STEP};
pub use metrics::{
    cf_metrics, escalate_prf, pr_auc, pr_curve, provenance_metrics, safety_metrics, workload_at_recall, CfAlertResult,
    CfMetrics, MetricError, PrPoint, Prf, Provenance, Safety, NUMERIC_CODES,
};

use crate::canonical::{to_canonical_bytes, CanonicalError};
use crate::evidence::IndexError;
use crate::generate::GenerationError;
use crate::pipeline::{ConfigError, PipelineMode};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("split and world disagree: {0}")]
    Split(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("metric {name} = {value} outside [0,1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("report has no alerts")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    RuleBaseline,
    LinearBaseline,
    LlmOnly,
    RagOnly,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::RuleBaseline, Variant::LinearBaseline, Variant::LlmOnly, Variant::RagOnly, Variant::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::RuleBaseline => "rule_baseline",
            Variant::LinearBaseline => "linear_baseline",
            Variant::LlmOnly => "llm_only",
            Variant::RagOnly => "rag_only",
            Variant::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// The pipeline behind a generator variant; score-only baselines have none.
    pub fn mode(self) -> Option<PipelineMode> {
        match self {
            Variant::RuleBaseline | Variant::LinearBaseline => None,
            Variant::LlmOnly => Some(PipelineMode::LlmOnly),
            Variant::RagOnly => Some(PipelineMode::RagOnly),
            Variant::Full => Some(PipelineMode::Full),
        }
    }
}

/// One row of the comparison. Metrics a variant does not define are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escalate_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escalate_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escalate_f1: Option<f64>,
    #[serde(default)]
    pub escalate_degenerate: bool,
    /// Keyed by target recall with two decimals.
    #[serde(default)]
    pub workload_at_recall: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub citation_validity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_support: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub driver_coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_citations_per_alert: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf_flip_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf_removal_faithfulness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf_stability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numerical_inconsistency_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_hallucination_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unsupported_assertion_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversarial_uncertainty_rate: Option<f64>,
    pub n_alerts: usize,
    pub variant_tag: String,
}

impl MetricsReport {
    /// Rates with their names, in table order.
    pub fn rates(&self) -> Vec<(&'static str, Option<f64>)> {
        let mut out = vec![
            ("pr_auc", self.pr_auc),
            ("escalate_precision", self.escalate_precision),
            ("escalate_recall", self.escalate_recall),
            ("escalate_f1", self.escalate_f1),
            ("citation_validity", self.citation_validity),
            ("evidence_support", self.evidence_support),
            ("driver_coverage", self.driver_coverage),
            ("cf_flip_rate", self.cf_flip_rate),
            ("cf_removal_faithfulness", self.cf_removal_faithfulness),
            ("cf_stability", self.cf_stability),
            ("numerical_inconsistency_rate", self.numerical_inconsistency_rate),
            ("policy_hallucination_rate", self.policy_hallucination_rate),
            ("unsupported_assertion_rate", self.unsupported_assertion_rate),
            ("adversarial_uncertainty_rate", self.adversarial_uncertainty_rate),
        ];
        out.extend(self.workload_at_recall.values().map(|v| ("workload_at_recall", Some(*v))));
        out
    }

    pub fn check(&self) -> Result<(), EvalError> {
        if self.n_alerts == 0 {
            return Err(EvalError::Empty);
        }
        for (name, v) in self.rates() {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(EvalError::OutOfRange { name, value: v });
                }
            }
        }
        Ok(())
    }
}

const TABLE_COLUMNS: [(&str, &str); 17] = [
    ("PR-AUC", "pr_auc"),
    ("Esc-P", "escalate_precision"),
    ("Esc-R", "escalate_recall"),
    ("Esc-F1", "escalate_f1"),
    ("Workload@0.90", "workload_0.90"),
    ("Citation validity", "citation_validity"),
    ("Evidence support", "evidence_support"),
    ("Driver coverage", "driver_coverage"),
    ("Avg citations", "avg_citations_per_alert"),
    ("CF-Flip", "cf_flip_rate"),
    ("CF removal", "cf_removal_faithfulness"),
    ("CF-Stability", "cf_stability"),
    ("Numeric incons.", "numerical_inconsistency_rate"),
    ("Policy halluc.", "policy_hallucination_rate"),
    ("Unsupported", "unsupported_assertion_rate"),
    ("Adv. uncertainty", "adversarial_uncertainty_rate"),
    ("Alerts", "n_alerts"),
];

fn cell(r: &MetricsReport, key: &str) -> String {
    let v = match key {
        "workload_0.90" => r.workload_at_recall.get("0.90").copied(),
        "avg_citations_per_alert" => r.avg_citations_per_alert,
        "n_alerts" => return r.n_alerts.to_string(),
        k => r.rates().into_iter().find(|(n, _)| *n == k).and_then(|(_, v)| v),
    };
    v.map_or_else(|| "—".to_string(), |v| format!("{v:.4}"))
}

/// Markdown comparison table, one row per report in the given order.
pub fn render_table1(reports: &[MetricsReport]) -> String {
    let mut s = String::from("| Variant |");
    for (h, _) in TABLE_COLUMNS {
        let _ = write!(s, " {h} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(TABLE_COLUMNS.len()));
    s.push('\n');
    for r in reports {
        let _ = write!(s, "| {} |", r.variant_tag);
        for (_, k) in TABLE_COLUMNS {
            let _ = write!(s, " {} |", cell(r, k));
        }
        s.push('\n');
    }
    s
}

pub fn render_pr_curve(curve: &[PrPoint]) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for p in curve {
        let _ = writeln!(s, "{:.6},{:.6},{:.6}", p.threshold, p.precision, p.recall);
    }
    s
}

/// Writes `report.<variant>.json` and `pr_curve.<variant>.csv`.
pub fn write_variant(dir: &Path, run: &VariantRun) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    let tag = &run.report.variant_tag;
    std::fs::write(dir.join(format!("report.{tag}.json")), to_canonical_bytes(&run.report)?)?;
    std::fs::write(dir.join(format!("pr_curve.{tag}.csv")), render_pr_curve(&run.curve))?;
    Ok(())
}

/// Reads every `report.<variant>.json` present in `dir`, in variant order.
pub fn read_reports(dir: &Path) -> Result<Vec<MetricsReport>, EvalError> {
    let mut out = Vec::new();
    for v in Variant::ALL {
        let path = dir.join(format!("report.{}.json", v.as_str()));
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            out.push(serde_json::from_str(&text).map_err(|e| CanonicalError::Serialize(e.to_string()))?);
        }
    }
    Ok(out)
}

pub fn write_table1(dir: &Path, reports: &[MetricsReport]) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("table1.md"), render_table1(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests;
