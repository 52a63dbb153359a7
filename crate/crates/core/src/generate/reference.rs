//! Deterministic template generator whose decision mirrors the validator table.

use super::draft::{DraftParagraph, DraftRecord};
use crate::model::{
    AlertContext, Comparator, EvidenceBundle, EvidenceItem, FieldValue, Indicator, SourceType,
};
use crate::validator::ValidatorTable;

pub const ACTION_MISSING: &str = "request missing information";
pub const ACTION_LOOKBACK: &str = "expand lookback window";

/// The evidence items a rationale can lean on, looked up once.
struct Sources<'b> {
    slice: Option<&'b EvidenceItem>,
    trigger: Option<&'b EvidenceItem>,
    kyc: Option<&'b EvidenceItem>,
    monitoring: Option<&'b EvidenceItem>,
    bundle: &'b EvidenceBundle,
}

impl<'b> Sources<'b> {
    fn find(ctx: &AlertContext, bundle: &'b EvidenceBundle) -> Self {
        let own = |ty: SourceType| {
            bundle.of_type(ty).find(|e| e.scope.alert_id.as_deref() == Some(ctx.alert.id.as_str()))
        };
        Self {
            slice: own(SourceType::Transaction),
            trigger: own(SourceType::Trigger),
            kyc: bundle
                .of_type(SourceType::Kyc)
                .find(|e| e.scope.customer_id.as_deref() == Some(ctx.alert.customer_id.as_str())),
            monitoring: bundle
                .of_type(SourceType::Policy)
                .filter(|e| e.id.starts_with("ev-policy-monitoring"))
                .max_by_key(|e| e.version),
            bundle,
        }
    }

    fn policy_for(&self, ind: Indicator) -> Option<&'b EvidenceItem> {
        let t = ind.typology()?;
        self.bundle.of_type(SourceType::Policy).find(|e| e.scope.alert_type == Some(t))
    }
}

fn field<'a>(item: &'a EvidenceItem, path: &str) -> Option<&'a FieldValue> {
    item.structured_fields.get(path)
}

fn amount(item: &EvidenceItem, path: &str) -> Option<i64> {
    match field(item, path) {
        Some(FieldValue::Amount(a)) => Some(*a),
        _ => None,
    }
}

/// Builds the clean draft for `ctx` using only items present in `bundle`.
pub(crate) fn reference_draft(ctx: &AlertContext, bundle: &EvidenceBundle, table: &ValidatorTable) -> DraftRecord {
    let src = Sources::find(ctx, bundle);
    let active = table.ranked(&ctx.active_indicators());
    let (score, disposition) = table.score(ctx);

    let mut unknowns = Vec::new();
    let mut actions = Vec::new();
    let mut contradicting = Vec::new();
    let note = |u: String, a: &str, unknowns: &mut Vec<String>, actions: &mut Vec<String>| {
        unknowns.push(u);
        if !actions.iter().any(|x| x == a) {
            actions.push(a.to_string());
        }
    };

    for (ty, present) in [
        (SourceType::Kyc, src.kyc.is_some()),
        (SourceType::Trigger, src.trigger.is_some()),
        (SourceType::Transaction, src.slice.is_some()),
    ] {
        if !present {
            note(format!("missing evidence: {}", ty.as_str()), ACTION_MISSING, &mut unknowns, &mut actions);
        }
    }

    // a same-alert item whose total disagrees with the slice is a conflict:
    // neither value is stated as fact
    let mut total_conflict = false;
    if let (Some(slice), Some(total)) = (src.slice, src.slice.and_then(|s| amount(s, "total_amount"))) {
        for other in bundle.items.iter().filter(|e| {
            e.id != slice.id && e.source_type != SourceType::Case && e.scope.alert_id == slice.scope.alert_id
        }) {
            if let Some(v) = amount(other, "total_amount") {
                if v != total {
                    total_conflict = true;
                    contradicting.push(other.id.clone());
                    note(
                        format!("conflicting total_amount between {} and {}", other.id, slice.id),
                        ACTION_MISSING,
                        &mut unknowns,
                        &mut actions,
                    );
                }
            }
        }
    }

    let mut paragraphs = Vec::new();
    for ind in &active {
        let corroborator = if *ind == Indicator::PriorAlerts { src.trigger } else { src.slice };
        if corroborator.is_none() {
            let ty = if *ind == Indicator::PriorAlerts { SourceType::Trigger } else { SourceType::Transaction };
            note(
                format!("{} not corroborated: no {} evidence in bundle", ind.as_str(), ty.as_str()),
                ACTION_LOOKBACK,
                &mut unknowns,
                &mut actions,
            );
        }
        paragraphs.push(indicator_paragraph(*ind, &src, total_conflict));
    }
    if active.is_empty() {
        paragraphs.push(quiet_paragraph(&src, total_conflict));
    }

    DraftRecord {
        alert_id: ctx.alert.id.clone(),
        disposition,
        confidence: score,
        typologies: active.iter().filter_map(|i| i.typology()).collect(),
        paragraphs,
        contradicting,
        unknowns,
        next_actions: actions,
    }
}

fn window_end(p: &mut DraftParagraph, slice: &EvidenceItem) {
    if let Some(f) = field(slice, "window_end") {
        p.lit(" in the window ending ").field(&slice.id, "window_end", f);
    }
}

fn indicator_paragraph(ind: Indicator, src: &Sources<'_>, total_conflict: bool) -> DraftParagraph {
    let mut p = DraftParagraph::default();
    if let Some(pol) = src.policy_for(ind) {
        p.cite(&pol.id);
    }
    let slice = src.slice;
    let f = |path: &str| slice.and_then(|s| field(s, path).map(|v| (s.id.as_str(), v)));
    match ind {
        Indicator::StructuringPattern => match (f("cash_deposit_count"), f("cash_deposit_total")) {
            (Some((sid, count)), Some((_, total))) => {
                p.lit("Structuring indicator: the account received ")
                    .field(sid, "cash_deposit_count", count)
                    .lit(" sub-threshold cash deposits totaling ")
                    .field(sid, "cash_deposit_total", total);
                window_end(&mut p, slice.expect("slice"));
                p.lit(".");
                let thr = src.trigger.and_then(|t| field(t, "threshold").map(|v| (t, v)));
                match (thr, total) {
                    (Some((trig, thr_field)), FieldValue::Amount(cash)) => {
                        p.lit(" Their combined total ")
                            .threshold(*cash, Comparator::Gt, &trig.id, "threshold")
                            .lit(" exceeds the ")
                            .field(&trig.id, "threshold", thr_field)
                            .lit(" reporting threshold while each deposit stays below it, matching the structuring typology.");
                    }
                    _ => {
                        p.lit(" Each deposit stays below the reporting threshold, matching the structuring typology.");
                    }
                }
            }
            _ => {
                p.lit("Structuring indicator is active for this alert.");
            }
        },
        Indicator::RapidMovement => match (f("max_amount"), f("tx_count")) {
            (Some((sid, max)), Some((_, n))) => {
                p.lit("Rapid movement indicator: funds passed through the account in a chain of forwarding transfers, the largest ")
                    .field(sid, "max_amount", max)
                    .lit(", across ")
                    .field(sid, "tx_count", n)
                    .lit(" transactions");
                window_end(&mut p, slice.expect("slice"));
                p.lit(".");
                if let Some((_, cp)) = f("top_counterparty") {
                    p.lit(" Funds moved onward to ")
                        .field(sid, "top_counterparty", cp)
                        .lit(", consistent with rapid movement layering.");
                } else {
                    p.lit(" The pattern is consistent with rapid movement layering.");
                }
            }
            _ => {
                p.lit("Rapid movement indicator is active for this alert.");
            }
        },
        Indicator::HighRiskCounterparty => match f("wire_total") {
            Some((sid, wires)) => {
                p.lit("High-risk counterparty indicator: wires totaling ")
                    .field(sid, "wire_total", wires)
                    .lit(" went to a high-risk jurisdiction");
                window_end(&mut p, slice.expect("slice"));
                p.lit(".");
                if let Some((_, cp)) = f("high_risk_counterparty") {
                    p.lit(" The flagged counterparty ")
                        .field(sid, "high_risk_counterparty", cp)
                        .lit(" sits in a high-risk jurisdiction.");
                }
            }
            None => {
                p.lit("High-risk counterparty indicator is active for this alert, pointing at jurisdiction exposure.");
            }
        },
        Indicator::FanIn => match f("distinct_sources") {
            Some((sid, sources)) => {
                p.lit("Fan-in indicator: ").field(sid, "distinct_sources", sources).lit(" distinct sources paid into the account");
                window_end(&mut p, slice.expect("slice"));
                if let (false, Some((_, total))) = (total_conflict, f("total_amount")) {
                    p.lit(", totaling ").field(sid, "total_amount", total);
                }
                p.lit(". The collected funds were consolidated into an outbound transfer, matching the fan-in typology.");
            }
            None => {
                p.lit("Fan-in indicator is active for this alert.");
            }
        },
        Indicator::PriorAlerts => {
            if let Some(kyc) = src.kyc {
                p.cite(&kyc.id);
            }
            match src.trigger.and_then(|t| field(t, "prior_alert_count").map(|v| (t, v))) {
                Some((trig, n)) => {
                    p.lit("Prior alerts: the customer has ")
                        .field(&trig.id, "prior_alert_count", n)
                        .lit(" prior alerts on record.");
                }
                None => {
                    p.lit("Prior alerts: the customer has repeated prior alerts on record.");
                }
            }
        }
    }
    p
}

fn quiet_paragraph(src: &Sources<'_>, total_conflict: bool) -> DraftParagraph {
    let mut p = DraftParagraph::default();
    if let Some(m) = src.monitoring {
        p.cite(&m.id);
    }
    p.lit("No typology indicator is active under the general monitoring guidance.");
    if let Some(slice) = src.slice {
        if let Some(n) = field(slice, "tx_count") {
            p.lit(" Transaction history");
            window_end(&mut p, slice);
            p.lit(" shows ").field(&slice.id, "tx_count", n).lit(" transactions");
            if let (false, Some(total)) = (total_conflict, field(slice, "total_amount")) {
                p.lit(" totaling ").field(&slice.id, "total_amount", total);
            }
            p.lit(", reviewed under general monitoring.");
        } else {
            p.cite(&slice.id);
        }
    }
    p
}
