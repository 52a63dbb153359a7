//! Runs one variant over the test split and reduces per-alert results into
//! a metrics report.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::linear::{features, LinearScorer};
use super::metrics::{
    cf_metrics, escalate_prf, pr_auc, pr_curve, provenance_metrics, safety_metrics, workload_at_recall, CfAlertResult, PrPoint,
};
use super::{EvalError, MetricsReport, Variant};
use crate::counterfactual::{find_counterfactuals, stability_probe, CfEnv, StabilityConfig};
use crate::evidence::EvidenceIndex;
use crate::generate::{GenEnv, Generator, GenerationError, TriageGenerator};
use crate::model::{AlertContext, Disposition, EvidenceBundle, FieldValue, Label, SourceType, TriageRecord};
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineEnv, PipelineMode, Tier, TriageOutcome};
use crate::simgen::{build_case_memory, DatasetSplit, World};
use crate::verify::{verify_repair_loop, VerificationReport, Verifier};

pub const DEFAULT_WORKLOAD_TARGETS: [f64; 3] = [0.8, 0.9, 0.95];
/// Added to the trigger total when an adversarial bundle gets a conflict.
pub const CONFLICT_DELTA: i64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Its `mode` is replaced by the variant's.
    pub pipeline: PipelineConfig,
    pub workload_targets: Vec<f64>,
    pub stability: StabilityConfig,
    pub adversarial: bool,
    /// Worker threads for per-alert work; 0 uses the available parallelism.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            workload_targets: DEFAULT_WORKLOAD_TARGETS.to_vec(),
            stability: StabilityConfig::default(),
            adversarial: true,
            threads: 0,
        }
    }
}

/// A world, its split, and the index and lexicon built from them.
pub struct EvalData {
    pub world: World,
    pub split: DatasetSplit,
    pub index: EvidenceIndex,
    pub lexicon: Vec<String>,
}

impl EvalData {
    pub fn new(world: World, split: DatasetSplit) -> Result<Self, EvalError> {
        let known: BTreeSet<&str> = world.alerts.iter().map(|a| a.id.as_str()).collect();
        let listed: Vec<&str> = split.all_ids().map(String::as_str).collect();
        if let Some(id) = listed.iter().find(|id| !known.contains(**id)) {
            return Err(EvalError::Split(format!("split names unknown alert {id}")));
        }
        if listed.len() != known.len() || listed.iter().collect::<BTreeSet<_>>().len() != listed.len() {
            return Err(EvalError::Split("split does not partition the world's alerts".into()));
        }
        if split.test_alert_ids.is_empty() {
            return Err(EvalError::Split("empty test split".into()));
        }
        let mut items = world.evidence_corpus.clone();
        items.extend(build_case_memory(&split, &world));
        let index = EvidenceIndex::build(items)?;
        let lexicon = world.entity_lexicon().into_iter().collect();
        Ok(Self { world, split, index, lexicon })
    }

    pub fn contexts(&self, ids: &[String]) -> Vec<AlertContext> {
        let idx = self.world.index();
        ids.iter().map(|id| idx.context(id).expect("split ids checked against the world")).collect()
    }

    pub fn gen_env(&self) -> Arc<GenEnv> {
        Arc::new(GenEnv { lexicon: self.lexicon.clone(), policies: self.index.of_type(SourceType::Policy).cloned().collect() })
    }

    pub fn verifier(&self) -> Verifier {
        Verifier::from_index(&self.index, self.lexicon.clone())
    }
}

pub fn is_suspicious(ctx: &AlertContext) -> bool {
    ctx.alert.label == Some(Label::Suspicious)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub report: MetricsReport,
    pub curve: Vec<PrPoint>,
    /// Per-alert outcomes of generator variants, in test-split order.
    pub outcomes: Vec<TriageOutcome>,
}

/// Order-preserving map over scoped worker threads.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = if threads == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { threads };
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degradation {
    MissingKyc,
    ConflictingAmount,
}

/// Alternates between dropping the customer's KYC item and giving the
/// alert's trigger a total that disagrees with its transaction slice.
pub fn degrade(ctx: &AlertContext, bundle: &EvidenceBundle, k: usize) -> (EvidenceBundle, Degradation) {
    let mut b = bundle.clone();
    let own_trigger = b
        .items
        .iter()
        .position(|e| e.source_type == SourceType::Trigger && e.scope.alert_id.as_deref() == Some(ctx.alert.id.as_str()));
    match own_trigger {
        Some(pos) if k % 2 == 1 => {
            if let Some(FieldValue::Amount(a)) = b.items[pos].structured_fields.get_mut("total_amount") {
                *a += CONFLICT_DELTA;
            }
            (b, Degradation::ConflictingAmount)
        }
        _ => {
            b.items.retain(|e| e.source_type != SourceType::Kyc);
            (b, Degradation::MissingKyc)
        }
    }
}

/// The record admits the gap or the conflict and states neither total.
pub fn stays_uncertain(record: &TriageRecord, ctx: &AlertContext, kind: Degradation) -> bool {
    match kind {
        Degradation::MissingKyc => record.unknowns.iter().any(|u| u.contains("kyc")),
        Degradation::ConflictingAmount => {
            let seq = crate::simgen::alert_seq(&ctx.alert.id);
            let own = |id: &str| id == format!("ev-trigger-{seq}") || id == format!("ev-transaction-{seq}");
            record.unknowns.iter().any(|u| u.starts_with("conflicting total_amount"))
                && !record
                    .paragraphs
                    .iter()
                    .flat_map(|p| &p.claims)
                    .any(|c| c.field_path == "total_amount" && own(&c.evidence_id))
        }
    }
}

/// Removes each of the record's top supporting items in turn and
/// regenerates. A test passes when the new record stops citing the item and
/// neither its score nor its disposition rises. Returns (tests, passed).
pub fn removal_tests(
    generator: &dyn TriageGenerator,
    ctx: &AlertContext,
    bundle: &EvidenceBundle,
    record: &TriageRecord,
    top: usize,
) -> Result<(usize, usize), GenerationError> {
    let (mut tests, mut passed) = (0, 0);
    for id in record.supporting_ids.iter().take(top) {
        let mut b = bundle.clone();
        b.items.retain(|e| &e.id != id);
        let r = generator.generate(ctx, &b, &[])?;
        tests += 1;
        let stopped = !r.cited_ids().contains(id.as_str());
        let direction = r.confidence <= record.confidence + 1e-12 && r.disposition <= record.disposition;
        passed += usize::from(stopped && direction);
    }
    Ok((tests, passed))
}

struct AlertEval {
    outcome: TriageOutcome,
    report: VerificationReport,
    cf: CfAlertResult,
    uncertain: Option<bool>,
}

struct Runner<'a> {
    data: &'a EvalData,
    config: PipelineConfig,
    stability: &'a StabilityConfig,
    adversarial: bool,
    generator: Generator,
    verifier: Verifier,
}

impl Runner<'_> {
    fn eval_alert(&self, k: usize, ctx: &AlertContext) -> Result<AlertEval, GenerationError> {
        let env = PipelineEnv { index: &self.data.index, generator: &self.generator, verifier: &self.verifier };
        let outcome = run_pipeline(ctx, &env, &self.config, &mut |_| {})?;
        let report = self.verifier.verify(&outcome.final_record, &outcome.bundle);
        let mode = self.config.mode;
        let mut cf = CfAlertResult::default();
        if mode != PipelineMode::LlmOnly && outcome.tier == Tier::Full {
            cf.attempted = true;
            cf.flipped = if mode == PipelineMode::Full {
                !outcome.counterfactuals.is_empty()
            } else {
                let cfc = self.config.cf_config();
                let cf_env = CfEnv { generator: &self.generator, verifier: &self.verifier, corpus: Some(&self.data.index), config: &cfc };
                !find_counterfactuals(&outcome.final_record, ctx, &outcome.bundle, &cf_env)?.accepted.is_empty()
            };
            (cf.removal_tests, cf.removal_faithful) =
                removal_tests(&self.generator, ctx, &outcome.bundle, &outcome.final_record, self.config.cf.top_support)?;
            let s = stability_probe(ctx, &outcome.bundle, &self.generator, &self.config.table, self.stability)?;
            cf.stability = Some(s.fraction());
        }
        let uncertain = if self.adversarial {
            let (b, kind) = degrade(ctx, &outcome.bundle, k);
            let record = if mode == PipelineMode::LlmOnly {
                self.generator.generate(ctx, &b, &[])?
            } else {
                verify_repair_loop(&self.generator, &self.verifier, ctx, &b, self.config.max_iters)?.final_record().clone()
            };
            Some(stays_uncertain(&record, ctx, kind))
        } else {
            None
        };
        Ok(AlertEval { outcome, report, cf, uncertain })
    }
}

fn scored_report(
    variant: Variant,
    scores: &[f64],
    dispositions: &[Disposition],
    labels: &[bool],
    targets: &[f64],
) -> Result<(MetricsReport, Vec<PrPoint>), EvalError> {
    let prf = escalate_prf(dispositions, labels)?;
    let mut workload = BTreeMap::new();
    for t in targets {
        workload.insert(format!("{t:.2}"), workload_at_recall(scores, labels, *t)?);
    }
    let report = MetricsReport {
        pr_auc: Some(pr_auc(scores, labels)?),
        escalate_precision: Some(prf.precision),
        escalate_recall: Some(prf.recall),
        escalate_f1: Some(prf.f1),
        escalate_degenerate: prf.degenerate,
        workload_at_recall: workload,
        n_alerts: scores.len(),
        variant_tag: variant.as_str().to_string(),
        ..MetricsReport::default()
    };
    Ok((report, pr_curve(scores, labels)?))
}

pub fn run_experiment(data: &EvalData, variant: Variant, config: &ExperimentConfig) -> Result<VariantRun, EvalError> {
    let test = data.contexts(&data.split.test_alert_ids);
    let labels: Vec<bool> = test.iter().map(is_suspicious).collect();
    let table = &config.pipeline.table;
    let band = |scores: &[f64]| scores.iter().map(|s| table.disposition_for(*s)).collect::<Vec<_>>();

    let Some(mode) = variant.mode() else {
        let scores: Vec<f64> = match variant {
            Variant::RuleBaseline => test.iter().map(|c| c.alert.trigger.max_score()).collect(),
            _ => {
                let train = data.contexts(&data.split.train_alert_ids);
                let xs: Vec<_> = train.iter().map(features).collect();
                let ys: Vec<bool> = train.iter().map(is_suspicious).collect();
                let scorer = LinearScorer::train(&xs, &ys);
                test.iter().map(|c| scorer.score(&features(c))).collect()
            }
        };
        let (report, curve) = scored_report(variant, &scores, &band(&scores), &labels, &config.workload_targets)?;
        report.check()?;
        return Ok(VariantRun { report, curve, outcomes: vec![] });
    };

    let pipeline = PipelineConfig { mode, ..config.pipeline.clone() };
    pipeline.check()?;
    let runner = Runner {
        data,
        generator: Generator::new(pipeline.generator_config(), data.gen_env())?,
        verifier: data.verifier(),
        config: pipeline,
        stability: &config.stability,
        adversarial: config.adversarial,
    };
    let indexed: Vec<(usize, &AlertContext)> = test.iter().enumerate().collect();
    let evals = par_map(&indexed, config.threads, |(k, ctx)| runner.eval_alert(*k, ctx))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let scores: Vec<f64> = evals.iter().map(|e| e.outcome.final_record.confidence).collect();
    let dispositions: Vec<Disposition> = evals.iter().map(|e| e.outcome.final_record.disposition).collect();
    let (mut report, curve) = scored_report(variant, &scores, &dispositions, &labels, &config.workload_targets)?;

    let triples: Vec<_> = evals.iter().map(|e| (&e.outcome.final_record, &e.outcome.bundle, &e.report)).collect();
    let prov = provenance_metrics(&triples);
    report.citation_validity = prov.citation_validity;
    report.evidence_support = prov.evidence_support;
    report.driver_coverage = prov.driver_coverage;
    report.avg_citations_per_alert = prov.avg_citations;

    if mode != PipelineMode::LlmOnly {
        let cf = cf_metrics(&evals.iter().map(|e| e.cf).collect::<Vec<_>>());
        report.cf_flip_rate = cf.cf_flip_rate;
        report.cf_removal_faithfulness = cf.cf_removal_faithfulness;
        report.cf_stability = cf.cf_stability;
    }

    let reports: Vec<&VerificationReport> = evals.iter().map(|e| &e.report).collect();
    let adversarial: Vec<bool> = evals.iter().filter_map(|e| e.uncertain).collect();
    let safety = safety_metrics(&reports, &adversarial);
    report.numerical_inconsistency_rate = safety.numerical_inconsistency_rate;
    report.policy_hallucination_rate = safety.policy_hallucination_rate;
    report.unsupported_assertion_rate = safety.unsupported_assertion_rate;
    report.adversarial_uncertainty_rate = safety.adversarial_uncertainty_rate;

    report.check()?;
    Ok(VariantRun { report, curve, outcomes: evals.into_iter().map(|e| e.outcome).collect() })
}
