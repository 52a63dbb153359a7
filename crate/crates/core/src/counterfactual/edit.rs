//! Atomic edits to alert facts and bundles, with plausibility rules.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::evidence::EvidenceIndex;
use crate::indicators::{fan_in_witness, high_risk_counterparties, rapid_witness, structuring_witness};
use crate::model::{AlertContext, Channel, EvidenceBundle, Indicator, RiskTier, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EditAtom {
    /// Switches an active indicator off by editing the facts behind it.
    ToggleIndicator { indicator: Indicator },
    SetCounterpartyRisk { account: String, tier: RiskTier },
    AdjustWindow { t_start: Timestamp, t_end: Timestamp },
    RemoveTransactionLink { tx_id: String },
    RemoveEvidence { evidence_id: String },
    SubstituteEvidence { old_id: String, new_id: String },
}

impl EditAtom {
    pub fn kind(&self) -> &'static str {
        match self {
            EditAtom::ToggleIndicator { .. } => "toggle_indicator",
            EditAtom::SetCounterpartyRisk { .. } => "set_counterparty_risk",
            EditAtom::AdjustWindow { .. } => "adjust_window",
            EditAtom::RemoveTransactionLink { .. } => "remove_transaction_link",
            EditAtom::RemoveEvidence { .. } => "remove_evidence",
            EditAtom::SubstituteEvidence { .. } => "substitute_evidence",
        }
    }

    /// Stable ordering key among atoms of equal priority.
    pub fn key(&self) -> String {
        let rank = match self {
            EditAtom::ToggleIndicator { .. } => 0,
            EditAtom::RemoveEvidence { .. } => 1,
            EditAtom::SetCounterpartyRisk { .. } => 2,
            EditAtom::RemoveTransactionLink { .. } => 3,
            EditAtom::SubstituteEvidence { .. } => 4,
            EditAtom::AdjustWindow { .. } => 5,
        };
        let arg = match self {
            EditAtom::ToggleIndicator { indicator } => format!("{indicator_rank:02}", indicator_rank = *indicator as u8),
            EditAtom::SetCounterpartyRisk { account, tier } => format!("{account}:{}", tier.as_str()),
            EditAtom::AdjustWindow { t_start, t_end } => format!("{t_start:020}:{t_end:020}"),
            EditAtom::RemoveTransactionLink { tx_id } => tx_id.clone(),
            EditAtom::RemoveEvidence { evidence_id } => evidence_id.clone(),
            EditAtom::SubstituteEvidence { old_id, new_id } => format!("{old_id}>{new_id}"),
        };
        format!("{rank}:{}:{arg}", self.kind())
    }

    /// Evidence ids this atom takes out of the bundle.
    pub fn removed_evidence(&self) -> Option<&str> {
        match self {
            EditAtom::RemoveEvidence { evidence_id } => Some(evidence_id),
            EditAtom::SubstituteEvidence { old_id, .. } => Some(old_id),
            _ => None,
        }
    }
}

impl fmt::Display for EditAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditAtom::ToggleIndicator { indicator } => write!(f, "ToggleIndicator({})", indicator.as_str()),
            EditAtom::SetCounterpartyRisk { account, tier } => write!(f, "SetCounterpartyRisk({account}, {})", tier.as_str()),
            EditAtom::AdjustWindow { t_start, t_end } => write!(f, "AdjustWindow({t_start}, {t_end})"),
            EditAtom::RemoveTransactionLink { tx_id } => write!(f, "RemoveTransactionLink({tx_id})"),
            EditAtom::RemoveEvidence { evidence_id } => write!(f, "RemoveEvidence({evidence_id})"),
            EditAtom::SubstituteEvidence { old_id, new_id } => write!(f, "SubstituteEvidence({old_id}, {new_id})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct CounterfactualEdit {
    pub atoms: Vec<EditAtom>,
}

impl CounterfactualEdit {
    pub fn new(atoms: Vec<EditAtom>) -> Self {
        Self { atoms }
    }

    pub fn single(atom: EditAtom) -> Self {
        Self { atoms: vec![atom] }
    }

    pub fn cost(&self) -> usize {
        self.atoms.len()
    }

    /// Order-independent identity, used to cache validation results.
    pub fn canonical_key(&self) -> Vec<String> {
        let mut k: Vec<String> = self.atoms.iter().map(EditAtom::key).collect();
        k.sort();
        k
    }

    pub fn removed_evidence(&self) -> impl Iterator<Item = &str> {
        self.atoms.iter().filter_map(EditAtom::removed_evidence)
    }
}

impl fmt::Display for CounterfactualEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.atoms.iter().map(|a| a.to_string()).collect();
        f.write_str(&parts.join(" + "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlausibilityRule {
    AmountPositive,
    WindowOrder,
    WindowContainsAlert,
    OrphanAlert,
    SubstituteSameType,
}

impl PlausibilityRule {
    pub fn as_str(self) -> &'static str {
        match self {
            PlausibilityRule::AmountPositive => "amount_positive",
            PlausibilityRule::WindowOrder => "window_order",
            PlausibilityRule::WindowContainsAlert => "window_contains_alert",
            PlausibilityRule::OrphanAlert => "orphan_alert",
            PlausibilityRule::SubstituteSameType => "substitute_same_type",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EditError {
    #[error("PLAUSIBILITY_VIOLATION({})", .rule.as_str())]
    Plausibility { rule: PlausibilityRule, atom: String },
    #[error("IMPOSSIBLE_EDIT: {atom}: {reason}")]
    Impossible { atom: String, reason: String },
}

impl EditError {
    pub fn code(&self) -> &'static str {
        match self {
            EditError::Plausibility { .. } => "PLAUSIBILITY_VIOLATION",
            EditError::Impossible { .. } => "IMPOSSIBLE_EDIT",
        }
    }
}

fn impossible(atom: &EditAtom, reason: impl Into<String>) -> EditError {
    EditError::Impossible { atom: atom.to_string(), reason: reason.into() }
}

fn implausible(atom: &EditAtom, rule: PlausibilityRule) -> EditError {
    EditError::Plausibility { rule, atom: atom.to_string() }
}

/// Applies the atoms in order and recomputes indicators. Evidence atoms leave
/// the facts alone.
pub fn apply_edit(ctx: &AlertContext, edit: &CounterfactualEdit) -> Result<AlertContext, EditError> {
    let mut out = ctx.clone();
    for atom in &edit.atoms {
        apply_atom(&mut out, atom)?;
        if out.transactions.iter().any(|t| t.amount <= 0) {
            return Err(implausible(atom, PlausibilityRule::AmountPositive));
        }
        out.refresh_indicators();
    }
    Ok(out)
}

/// Bounded number of fact rewrites a toggle may take.
const TOGGLE_ROUNDS: usize = 64;

fn apply_atom(ctx: &mut AlertContext, atom: &EditAtom) -> Result<(), EditError> {
    match atom {
        EditAtom::ToggleIndicator { indicator } => toggle_off(ctx, *indicator, atom),
        EditAtom::SetCounterpartyRisk { account, tier } => match ctx.counterparty_risk.get_mut(account) {
            Some(t) => {
                *t = *tier;
                Ok(())
            }
            None => Err(impossible(atom, format!("{account} is not a counterparty of this alert"))),
        },
        EditAtom::AdjustWindow { t_start, t_end } => {
            if t_end < t_start {
                return Err(implausible(atom, PlausibilityRule::WindowOrder));
            }
            if ctx.alert.alert_time < *t_start || ctx.alert.alert_time > *t_end {
                return Err(implausible(atom, PlausibilityRule::WindowContainsAlert));
            }
            ctx.alert.window = (*t_start, *t_end);
            Ok(())
        }
        EditAtom::RemoveTransactionLink { tx_id } => {
            let Some(pos) = ctx.transactions.iter().position(|t| &t.id == tx_id) else {
                return Err(impossible(atom, format!("{tx_id} is not linked to this alert")));
            };
            if ctx.transactions.len() <= 1 {
                return Err(implausible(atom, PlausibilityRule::OrphanAlert));
            }
            ctx.transactions.remove(pos);
            ctx.alert.transaction_ids.retain(|t| t != tx_id);
            Ok(())
        }
        EditAtom::RemoveEvidence { .. } | EditAtom::SubstituteEvidence { .. } => Ok(()),
    }
}

fn find_tx(ctx: &AlertContext, id: &str) -> usize {
    ctx.transactions.iter().position(|t| t.id == id).expect("witness transaction")
}

/// Per-typology fact edits that switch an indicator off:
/// structuring raises the largest deposit to the threshold, rapid movement
/// cuts each later hop to 80% of the previous one, fan-in shrinks the
/// outbound to 60% of the inflow, high-risk counterparty downgrades flagged
/// counterparties to medium, prior alerts sets the count to one.
fn toggle_off(ctx: &mut AlertContext, ind: Indicator, atom: &EditAtom) -> Result<(), EditError> {
    if !crate::indicators::evaluate(ctx, ind) {
        return Err(impossible(atom, format!("{} is not active", ind.as_str())));
    }
    for _ in 0..TOGGLE_ROUNDS {
        match ind {
            Indicator::StructuringPattern => {
                let Some((_, deposits)) = structuring_witness(ctx) else { break };
                let idx = deposits
                    .iter()
                    .map(|id| find_tx(ctx, id))
                    .filter(|i| ctx.transactions[*i].channel == Channel::Cash)
                    .max_by_key(|i| (ctx.transactions[*i].amount, std::cmp::Reverse(*i)))
                    .expect("deposit");
                ctx.transactions[idx].amount = ctx.params.structuring_threshold;
            }
            Indicator::RapidMovement => {
                let Some(chain) = rapid_witness(ctx) else { break };
                for w in chain.windows(2) {
                    let prev = ctx.transactions[find_tx(ctx, &w[0])].amount;
                    let i = find_tx(ctx, &w[1]);
                    ctx.transactions[i].amount = prev * 80 / 100;
                }
            }
            Indicator::FanIn => {
                let Some(w) = fan_in_witness(ctx) else { break };
                let i = find_tx(ctx, &w.outbound_id);
                ctx.transactions[i].amount = w.inflow_sum * 60 / 100;
            }
            Indicator::HighRiskCounterparty => {
                let flagged = high_risk_counterparties(ctx);
                if flagged.is_empty() {
                    break;
                }
                for a in flagged {
                    ctx.counterparty_risk.insert(a, RiskTier::Medium);
                }
            }
            Indicator::PriorAlerts => {
                ctx.customer.prior_alert_count = 1;
            }
        }
        if ctx.transactions.iter().any(|t| t.amount <= 0) {
            return Err(implausible(atom, PlausibilityRule::AmountPositive));
        }
        if !crate::indicators::evaluate(ctx, ind) {
            return Ok(());
        }
    }
    if crate::indicators::evaluate(ctx, ind) {
        return Err(impossible(atom, format!("{} could not be switched off", ind.as_str())));
    }
    Ok(())
}

/// Applies the evidence atoms to a bundle. Substitutes are looked up in
/// `corpus` and must share the source type of the item they replace.
pub fn apply_bundle_edit(
    bundle: &EvidenceBundle,
    edit: &CounterfactualEdit,
    corpus: Option<&EvidenceIndex>,
) -> Result<EvidenceBundle, EditError> {
    let mut out = bundle.clone();
    for atom in &edit.atoms {
        match atom {
            EditAtom::RemoveEvidence { evidence_id } => {
                let before = out.items.len();
                out.items.retain(|e| &e.id != evidence_id);
                if out.items.len() == before {
                    return Err(impossible(atom, format!("{evidence_id} is not in the bundle")));
                }
            }
            EditAtom::SubstituteEvidence { old_id, new_id } => {
                let Some(pos) = out.items.iter().position(|e| &e.id == old_id) else {
                    return Err(impossible(atom, format!("{old_id} is not in the bundle")));
                };
                if out.contains(new_id) {
                    return Err(impossible(atom, format!("{new_id} is already in the bundle")));
                }
                let Some(new) = corpus.and_then(|c| c.get(new_id)) else {
                    return Err(impossible(atom, format!("{new_id} does not exist")));
                };
                if new.source_type != out.items[pos].source_type {
                    return Err(implausible(atom, PlausibilityRule::SubstituteSameType));
                }
                out.items[pos] = new.clone();
            }
            _ => {}
        }
    }
    out.normalize();
    Ok(out)
}

/// Machine-readable description of the edit vocabulary.
pub fn edit_atom_schema() -> Value {
    json!({
        "budget_default": super::DEFAULT_BUDGET,
        "tau_flip_default": super::DEFAULT_TAU_FLIP,
        "atoms": [
            {"type": "toggle_indicator", "fields": {"indicator": Indicator::ALL.iter().map(|i| i.as_str()).collect::<Vec<_>>()},
             "effect": "switches an active indicator off by editing the facts behind it"},
            {"type": "set_counterparty_risk", "fields": {"account": "string", "tier": RiskTier::ALL.iter().map(|t| t.as_str()).collect::<Vec<_>>()}},
            {"type": "adjust_window", "fields": {"t_start": "unix seconds", "t_end": "unix seconds"}},
            {"type": "remove_transaction_link", "fields": {"tx_id": "string"}},
            {"type": "remove_evidence", "fields": {"evidence_id": "string"}},
            {"type": "substitute_evidence", "fields": {"old_id": "string", "new_id": "string"}}
        ],
        "plausibility_rules": ["amount_positive", "window_order", "window_contains_alert", "orphan_alert", "substitute_same_type"],
        "errors": ["PLAUSIBILITY_VIOLATION", "IMPOSSIBLE_EDIT"]
    })
}
