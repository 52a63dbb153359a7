//! One alert end to end: retrieve, generate, verify and repair, then search
//! for counterfactuals. Stage results are reported to a sink as they are
//! produced so callers can log them before the outcome is returned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counterfactual::{find_counterfactuals, CfConfig, CfEnv, ValidatedCounterfactual};
use crate::evidence::{default_quota, retrieve, EvidenceIndex, RetrievalQuery, DEFAULT_K_TOTAL};
use crate::generate::{GenerationError, GeneratorConfig, TriageGenerator};
use crate::model::{AclTag, AlertContext, EvidenceBundle, SourceType, TriageRecord};
use crate::validator::ValidatorTable;
use crate::verify::{repair_feedback, verify_repair_loop, Attempt, FinalStatus, RepairTrace, VerificationReport, Verifier, DEFAULT_MAX_ITERS};

/// Which parts of the pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Closed-book generation; no retrieval visible to the generator, no verifier.
    LlmOnly,
    /// Retrieval, verification and repair.
    RagOnly,
    /// Everything, including counterfactual search and a repair round
    /// after it for records still failing verification.
    #[default]
    Full,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 3] = [PipelineMode::LlmOnly, PipelineMode::RagOnly, PipelineMode::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::LlmOnly => "llm_only",
            PipelineMode::RagOnly => "rag_only",
            PipelineMode::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieredRouting {
    /// Alerts whose top rule score is below this skip counterfactual search.
    pub light_score_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub quota: BTreeMap<SourceType, usize>,
    pub k_total: usize,
    pub clearance: AclTag,
    pub generator: GeneratorConfig,
    pub max_iters: usize,
    pub cf: CfConfig,
    /// Shared by the generator and the counterfactual validator.
    pub table: ValidatorTable,
    pub mode: PipelineMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiered_routing: Option<TieredRouting>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            quota: default_quota(),
            k_total: DEFAULT_K_TOTAL,
            clearance: AclTag::Restricted,
            generator: GeneratorConfig::reference(),
            max_iters: DEFAULT_MAX_ITERS,
            cf: CfConfig::default(),
            table: ValidatorTable::default(),
            mode: PipelineMode::Full,
            tiered_routing: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("k_total must be positive")]
    KTotal,
    #[error("cf budget {0} outside 1..=3")]
    Budget(usize),
    #[error("light_score_threshold {0} outside [0,1]")]
    Routing(f64),
    #[error(transparent)]
    Generator(#[from] GenerationError),
}

impl PipelineConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.k_total == 0 {
            return Err(ConfigError::KTotal);
        }
        if !(1..=3).contains(&self.cf.budget) {
            return Err(ConfigError::Budget(self.cf.budget));
        }
        if let Some(r) = self.tiered_routing {
            if !(0.0..=1.0).contains(&r.light_score_threshold) {
                return Err(ConfigError::Routing(r.light_score_threshold));
            }
        }
        self.generator_config().check()?;
        Ok(())
    }

    /// The generator configuration with the shared table and the mode's
    /// closed-book flag applied.
    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig { llm_only: self.mode == PipelineMode::LlmOnly, table: self.table.clone(), ..self.generator.clone() }
    }

    pub fn cf_config(&self) -> CfConfig {
        CfConfig { table: self.table.clone(), ..self.cf.clone() }
    }

    pub fn query(&self, ctx: &AlertContext) -> RetrievalQuery {
        let mut q = RetrievalQuery::from_context(ctx, self.clearance);
        q.quota = self.quota.clone();
        q.k_total = self.k_total;
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Full,
    Light,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Verified,
    /// Verified, with counterfactual search skipped by tiered routing.
    LightTier,
    EscalateToHuman,
    /// Closed-book output that never went through the verifier.
    Unverified,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageOutcome {
    pub alert_id: String,
    pub mode: PipelineMode,
    pub bundle: EvidenceBundle,
    /// Absent when the verifier did not run.
    pub trace: Option<RepairTrace>,
    pub final_record: TriageRecord,
    pub counterfactuals: Vec<ValidatedCounterfactual>,
    pub cf_attempts: usize,
    pub status: OutcomeStatus,
    pub tier: Tier,
}

/// Stage results in the order they occur.
#[derive(Debug, Clone, Copy)]
pub enum StageEvent<'a> {
    BundleBuilt(&'a EvidenceBundle),
    Generated { attempt: usize, record: &'a TriageRecord },
    Verified { attempt: usize, report: &'a VerificationReport },
    Counterfactual(&'a ValidatedCounterfactual),
}

pub struct PipelineEnv<'a> {
    pub index: &'a EvidenceIndex,
    pub generator: &'a dyn TriageGenerator,
    pub verifier: &'a Verifier,
}

pub fn run_pipeline(
    ctx: &AlertContext,
    env: &PipelineEnv<'_>,
    config: &PipelineConfig,
    sink: &mut dyn FnMut(StageEvent<'_>),
) -> Result<TriageOutcome, GenerationError> {
    let bundle = retrieve(env.index, &config.query(ctx));
    sink(StageEvent::BundleBuilt(&bundle));

    if config.mode == PipelineMode::LlmOnly {
        let record = env.generator.generate(ctx, &bundle, &[])?;
        sink(StageEvent::Generated { attempt: 0, record: &record });
        return Ok(TriageOutcome {
            alert_id: ctx.alert.id.clone(),
            mode: config.mode,
            bundle,
            trace: None,
            final_record: record,
            counterfactuals: vec![],
            cf_attempts: 0,
            status: OutcomeStatus::Unverified,
            tier: Tier::Full,
        });
    }

    let mut trace = verify_repair_loop(env.generator, env.verifier, ctx, &bundle, config.max_iters)?;
    for (i, a) in trace.attempts.iter().enumerate() {
        sink(StageEvent::Generated { attempt: i, record: &a.record });
        sink(StageEvent::Verified { attempt: i, report: &a.report });
    }

    let tier = match config.tiered_routing {
        Some(r) if ctx.alert.trigger.max_score() < r.light_score_threshold => Tier::Light,
        _ => Tier::Full,
    };
    let mut counterfactuals = vec![];
    let mut cf_attempts = 0;
    if config.mode == PipelineMode::Full && tier == Tier::Full {
        let cf = config.cf_config();
        let cf_env = CfEnv { generator: env.generator, verifier: env.verifier, corpus: Some(env.index), config: &cf };
        let found = find_counterfactuals(trace.final_record(), ctx, &bundle, &cf_env)?;
        cf_attempts = found.attempts;
        for v in &found.accepted {
            sink(StageEvent::Counterfactual(v));
        }
        counterfactuals = found.accepted;

        if trace.final_status == FinalStatus::EscalateToHuman {
            let feedback: Vec<String> = trace.attempts.iter().flat_map(|a| a.feedback.iter().cloned()).collect();
            let record = env.generator.generate(ctx, &bundle, &feedback)?;
            let report = env.verifier.verify(&record, &bundle);
            let n = trace.attempts.len();
            sink(StageEvent::Generated { attempt: n, record: &record });
            sink(StageEvent::Verified { attempt: n, report: &report });
            let next = repair_feedback(&report).unwrap_or_default();
            if report.passed {
                trace.final_status = FinalStatus::Verified;
            }
            trace.attempts.push(Attempt { record, report, feedback: next });
            trace.iterations += 1;
        }
    }

    let status = match (trace.final_status, tier) {
        (FinalStatus::EscalateToHuman, _) => OutcomeStatus::EscalateToHuman,
        (FinalStatus::Verified, Tier::Light) => OutcomeStatus::LightTier,
        (FinalStatus::Verified, Tier::Full) => OutcomeStatus::Verified,
    };
    Ok(TriageOutcome {
        alert_id: ctx.alert.id.clone(),
        mode: config.mode,
        final_record: trace.final_record().clone(),
        bundle,
        trace: Some(trace),
        counterfactuals,
        cf_attempts,
        status,
        tier,
    })
}
