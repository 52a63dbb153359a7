//! Decision and evidence counterfactuals: budgeted atomic edits, validation
//! against the rules validator, and stability probes.

mod edit;
mod stability;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use edit::{
    apply_bundle_edit, apply_edit, edit_atom_schema, CounterfactualEdit, EditAtom, EditError, PlausibilityRule,
};
pub use stability::{amount_probe_allowed, stability_probe, ProbeKind, StabilityConfig, StabilityResult, PROBE_GUARD};

use crate::evidence::EvidenceIndex;
use crate::generate::{contains_token, GenerationError, TriageGenerator};
use crate::model::{AlertContext, Disposition, EvidenceBundle, Indicator, RiskTier, TriageRecord};
use crate::validator::ValidatorTable;
use crate::verify::Verifier;

pub const DEFAULT_BUDGET: usize = 3;
pub const DEFAULT_MAX_PROPOSALS: usize = 8;
pub const DEFAULT_MAX_ACCEPTED: usize = 2;
pub const DEFAULT_TAU_FLIP: f64 = 0.15;

/// Which single atoms the proposer enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalScope {
    /// Atoms aimed at the record's drivers: its named indicators, its top
    /// supporting evidence and the high-risk counterparties it names.
    #[default]
    Drivers,
    /// Driver atoms first, then every other legal toggle, evidence removal,
    /// counterparty tier change and transaction-link removal.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfConfig {
    pub budget: usize,
    pub max_proposals: usize,
    pub max_accepted: usize,
    pub tau_flip: f64,
    /// How many leading supporting ids count as top support.
    pub top_support: usize,
    pub scope: ProposalScope,
    pub table: ValidatorTable,
}

impl Default for CfConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            max_proposals: DEFAULT_MAX_PROPOSALS,
            max_accepted: DEFAULT_MAX_ACCEPTED,
            tau_flip: DEFAULT_TAU_FLIP,
            top_support: 3,
            scope: ProposalScope::Drivers,
            table: ValidatorTable::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CfError {
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

/// Everything a counterfactual validation needs besides the alert.
#[derive(Clone, Copy)]
pub struct CfEnv<'a> {
    pub generator: &'a dyn TriageGenerator,
    pub verifier: &'a Verifier,
    /// Source of substitute evidence.
    pub corpus: Option<&'a EvidenceIndex>,
    pub config: &'a CfConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedCounterfactual {
    pub edit: CounterfactualEdit,
    pub pre_score: f64,
    pub post_score: f64,
    pub pre_disposition: Disposition,
    pub post_disposition: Disposition,
    pub flip_valid: bool,
    pub rationale_aligned: bool,
    pub accepted: bool,
    pub post_record: TriageRecord,
}

pub fn validator_score(table: &ValidatorTable, ctx: &AlertContext) -> (f64, Disposition) {
    table.score(ctx)
}

/// Indicators a record names, by their phrase anywhere in paragraph text.
pub fn named_indicators(record: &TriageRecord) -> BTreeSet<Indicator> {
    let texts: Vec<String> = record.paragraphs.iter().map(|p| p.text.to_lowercase()).collect();
    Indicator::ALL.into_iter().filter(|i| texts.iter().any(|t| t.contains(i.phrase()))).collect()
}

/// Single atoms aimed at the record's drivers, in priority order.
fn driver_atoms(record: &TriageRecord, ctx: &AlertContext, top_support: usize) -> Vec<EditAtom> {
    let mut out = Vec::new();
    for ind in named_indicators(record) {
        if ctx.is_active(ind) {
            out.push(EditAtom::ToggleIndicator { indicator: ind });
        }
    }
    for id in record.supporting_ids.iter().take(top_support) {
        out.push(EditAtom::RemoveEvidence { evidence_id: id.clone() });
    }
    for (account, tier) in &ctx.counterparty_risk {
        if *tier == RiskTier::High && record.paragraphs.iter().any(|p| contains_token(&p.text, account)) {
            out.push(EditAtom::SetCounterpartyRisk { account: account.clone(), tier: RiskTier::Medium });
        }
    }
    out.sort_by_key(EditAtom::key);
    out
}

/// All legal single atoms outside `AdjustWindow` and `SubstituteEvidence`.
pub fn enumerate_single_atoms(ctx: &AlertContext, bundle: &EvidenceBundle) -> Vec<EditAtom> {
    let mut out = Vec::new();
    for ind in ctx.active_indicators() {
        out.push(EditAtom::ToggleIndicator { indicator: ind });
    }
    for e in &bundle.items {
        out.push(EditAtom::RemoveEvidence { evidence_id: e.id.clone() });
    }
    for (account, current) in &ctx.counterparty_risk {
        for tier in RiskTier::ALL {
            if tier != *current {
                out.push(EditAtom::SetCounterpartyRisk { account: account.clone(), tier });
            }
        }
    }
    if ctx.transactions.len() > 1 {
        for t in &ctx.transactions {
            out.push(EditAtom::RemoveTransactionLink { tx_id: t.id.clone() });
        }
    }
    out.retain(|a| apply_edit(ctx, &CounterfactualEdit::single(a.clone())).is_ok());
    out.sort_by_key(EditAtom::key);
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Deterministic proposals: driver singles, then (in exhaustive scope) the
/// remaining singles, then combinations of driver atoms by increasing cost.
pub fn propose_edits(
    record: &TriageRecord,
    ctx: &AlertContext,
    bundle: &EvidenceBundle,
    config: &CfConfig,
) -> Vec<CounterfactualEdit> {
    if config.budget == 0 || config.max_proposals == 0 {
        return vec![];
    }
    let drivers = driver_atoms(record, ctx, config.top_support);
    let mut out: Vec<CounterfactualEdit> = drivers.iter().cloned().map(CounterfactualEdit::single).collect();
    if config.scope == ProposalScope::Exhaustive {
        for a in enumerate_single_atoms(ctx, bundle) {
            if !drivers.contains(&a) {
                out.push(CounterfactualEdit::single(a));
            }
        }
    }
    for k in 2..=config.budget.min(drivers.len()) {
        if out.len() >= config.max_proposals {
            break;
        }
        for combo in combinations(drivers.len(), k) {
            out.push(CounterfactualEdit::new(combo.into_iter().map(|i| drivers[i].clone()).collect()));
        }
    }
    out.truncate(config.max_proposals);
    out
}

/// Applies the edit, scores both contexts, regenerates on the edited facts
/// and checks the new rationale against them.
pub fn validate_counterfactual(
    edit: &CounterfactualEdit,
    ctx: &AlertContext,
    bundle: &EvidenceBundle,
    env: &CfEnv<'_>,
) -> Result<ValidatedCounterfactual, CfError> {
    let edited = apply_edit(ctx, edit)?;
    let edited_bundle = apply_bundle_edit(bundle, edit, env.corpus)?;
    let table = &env.config.table;
    let (pre_score, pre_disposition) = table.score(ctx);
    let (post_score, post_disposition) = table.score(&edited);
    let flip_valid =
        pre_disposition != post_disposition || (post_score - pre_score).abs() >= env.config.tau_flip - 1e-12;
    let post_record = env.generator.generate(&edited, &edited_bundle, &[])?;
    let removed: BTreeSet<&str> = edit.removed_evidence().collect();
    let cites_removed = post_record.citations().any(|c| removed.contains(c));
    let stale_driver = named_indicators(&post_record).iter().any(|i| !edited.is_active(*i));
    let verified = env.verifier.verify(&post_record, &edited_bundle).passed;
    let rationale_aligned = !cites_removed && !stale_driver && verified;
    Ok(ValidatedCounterfactual {
        edit: edit.clone(),
        pre_score,
        post_score,
        pre_disposition,
        post_disposition,
        flip_valid,
        rationale_aligned,
        accepted: flip_valid && rationale_aligned,
        post_record,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub accepted: Vec<ValidatedCounterfactual>,
    /// Proposals tried, including rejected and non-minimal ones.
    pub attempts: usize,
    pub rejected_non_minimal: usize,
}

/// Walks the proposals in order, accepting minimal valid edits until
/// `max_accepted` is reached. Edits that fail to apply count as rejected
/// attempts.
pub fn find_counterfactuals(
    record: &TriageRecord,
    ctx: &AlertContext,
    bundle: &EvidenceBundle,
    env: &CfEnv<'_>,
) -> Result<SearchResult, GenerationError> {
    let mut cache: HashMap<Vec<String>, bool> = HashMap::new();
    let mut result = SearchResult { accepted: vec![], attempts: 0, rejected_non_minimal: 0 };
    let check = |edit: &CounterfactualEdit, cache: &mut HashMap<Vec<String>, bool>| -> Result<Option<ValidatedCounterfactual>, GenerationError> {
        let out = match validate_counterfactual(edit, ctx, bundle, env) {
            Ok(v) => Some(v),
            Err(CfError::Edit(_)) => None,
            Err(CfError::Generation(e)) => return Err(e),
        };
        cache.insert(edit.canonical_key(), out.as_ref().is_some_and(|v| v.accepted));
        Ok(out)
    };
    for edit in propose_edits(record, ctx, bundle, env.config) {
        if result.accepted.len() >= env.config.max_accepted {
            break;
        }
        result.attempts += 1;
        let n = edit.cost();
        let mut non_minimal = false;
        'subsets: for k in 1..n {
            for combo in combinations(n, k) {
                let sub = CounterfactualEdit::new(combo.into_iter().map(|i| edit.atoms[i].clone()).collect());
                let hit = match cache.get(&sub.canonical_key()) {
                    Some(a) => *a,
                    None => check(&sub, &mut cache)?.is_some_and(|v| v.accepted),
                };
                if hit {
                    non_minimal = true;
                    break 'subsets;
                }
            }
        }
        if non_minimal {
            result.rejected_non_minimal += 1;
            continue;
        }
        if let Some(v) = check(&edit, &mut cache)? {
            if v.accepted {
                result.accepted.push(v);
            }
        }
    }
    Ok(result)
}
