//! Evidence corpus: policies, KYC profiles, trigger records, transaction
//! slices and closed-case memory.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{World, WorldConfig, DAY, EPOCH_START};
use crate::model::{
    format_currency, format_timestamp, AclTag, Alert, AlertContext, AlertType, Channel, EvidenceItem, EvidenceScope,
    FieldValue, Label, RiskTier, SourceType, Transaction, CASH_SOURCE,
};

fn fields(pairs: Vec<(&str, FieldValue)>) -> BTreeMap<String, FieldValue> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn typology_phrase(t: AlertType) -> &'static str {
    match t {
        AlertType::Structuring => "multiple sub-threshold cash deposits",
        AlertType::RapidMovement => "pass-through transfers forwarded onward within hours",
        AlertType::HighRiskCounterparty => "repeated wires to high-risk jurisdictions",
        AlertType::FanIn => "many inbound payments consolidated into one outbound transfer",
    }
}

fn policy(id: &str, text: &str, alert_type: Option<AlertType>, acl: AclTag, effective: i64) -> EvidenceItem {
    EvidenceItem {
        id: id.into(),
        source_type: SourceType::Policy,
        effective_time: effective,
        acl_tag: acl,
        canonical_text: text.into(),
        structured_fields: BTreeMap::new(),
        version: 1,
        supersedes: None,
        scope: EvidenceScope { alert_type, ..Default::default() },
    }
}

pub fn policy_items(config: &WorldConfig) -> Vec<EvidenceItem> {
    let t = format_currency(config.structuring_threshold);
    let since = EPOCH_START - 365 * DAY;
    let mut v2 = policy(
        "ev-policy-monitoring-v2",
        "General monitoring guidance (version 2). Alerts without a corroborated typology indicator may be closed after documented analyst review of customer context, transaction history and prior alerts. Customers with two or more prior alerts merit closer monitoring and a written note in the review.",
        None,
        AclTag::Public,
        EPOCH_START + i64::from(config.n_days / 2) * DAY,
    );
    v2.version = 2;
    v2.supersedes = Some("ev-policy-monitoring".into());
    vec![
        policy(
            "ev-policy-structuring",
            &format!("Structuring typology guidance (version 1). Structuring is the deliberate splitting of cash into multiple sub-threshold cash deposits so that no single deposit reaches the {t} currency reporting threshold. Several sub-threshold deposits into one account within three days whose combined total exceeds the reporting threshold indicate structuring and warrant analyst review."),
            Some(AlertType::Structuring),
            AclTag::Public,
            since,
        ),
        policy(
            "ev-policy-rapid-movement",
            "Rapid movement typology guidance (version 1). Rapid movement of funds, also called pass-through layering, occurs when an account receives funds and forwards most of them onward within two days. A chain of three or more rapid transfers each forwarding at least 85 percent of the received amount indicates layering.",
            Some(AlertType::RapidMovement),
            AclTag::Public,
            since,
        ),
        policy(
            "ev-policy-high-risk-counterparty",
            "High-risk counterparty typology guidance (version 1). Repeated wire transfers to a counterparty located in a high-risk jurisdiction whose own risk tier is high indicate jurisdiction exposure. Two or more such wires in the alert window call for enhanced review of the counterparty relationship.",
            Some(AlertType::HighRiskCounterparty),
            AclTag::Public,
            since,
        ),
        policy(
            "ev-policy-fan-in",
            "Fan-in typology guidance (version 1). Fan-in, or funnel activity, occurs when five or more distinct sources pay into one account within seven days and the collected funds are then consolidated into an outbound transfer of at least 70 percent of the inflow.",
            Some(AlertType::FanIn),
            AclTag::Public,
            since,
        ),
        policy(
            "ev-policy-monitoring",
            "General monitoring guidance (version 1). Alerts without a corroborated typology indicator may be closed after analyst review of customer context and transaction history. Customers with two or more prior alerts merit closer monitoring.",
            None,
            AclTag::Public,
            since,
        ),
        v2,
        policy(
            "ev-policy-investigator-playbook",
            "Investigator playbook (confidential). Internal escalation routing, reviewer assignment and quality sampling rules for typology alerts.",
            None,
            AclTag::Confidential,
            since,
        ),
    ]
}

/// Summary statistics of an alert's transactions from the alerted account's
/// point of view.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SliceStats {
    pub total_amount: i64,
    pub max_amount: i64,
    pub tx_count: u64,
    pub top_counterparty: Option<String>,
    pub cash_deposit_total: i64,
    pub cash_deposit_count: u64,
    pub wire_total: i64,
    pub distinct_sources: u64,
    pub burstiness: u64,
    pub high_risk_counterparty: Option<String>,
}

impl SliceStats {
    /// `high_risk` names counterparties that are high-risk by tier and geography.
    pub fn compute(account: &str, txs: &[&Transaction], high_risk: &BTreeSet<String>) -> Self {
        let mut s = SliceStats { tx_count: txs.len() as u64, ..Default::default() };
        let mut cp_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut sources: BTreeSet<&str> = BTreeSet::new();
        let mut hr: BTreeMap<&str, usize> = BTreeMap::new();
        for tx in txs {
            s.total_amount += tx.amount;
            s.max_amount = s.max_amount.max(tx.amount);
            if tx.channel == Channel::Wire {
                s.wire_total += tx.amount;
            }
            if tx.dst_account == account {
                sources.insert(&tx.src_account);
                if tx.channel == Channel::Cash {
                    s.cash_deposit_total += tx.amount;
                    s.cash_deposit_count += 1;
                }
            }
            let cp = if tx.src_account == account {
                Some(tx.dst_account.as_str())
            } else if tx.dst_account == account {
                Some(tx.src_account.as_str())
            } else {
                None
            };
            if let Some(cp) = cp.filter(|c| *c != CASH_SOURCE) {
                *cp_counts.entry(cp).or_default() += 1;
                if high_risk.contains(cp) && tx.channel == Channel::Wire {
                    *hr.entry(cp).or_default() += 1;
                }
            }
        }
        s.distinct_sources = sources.len() as u64;
        // most frequent, smallest id on ties
        s.top_counterparty = cp_counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| k.to_string());
        s.high_risk_counterparty = hr
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| k.to_string());
        let mut times: Vec<i64> = txs.iter().map(|t| t.timestamp).collect();
        times.sort_unstable();
        let mut lo = 0;
        for hi in 0..times.len() {
            while times[hi] - times[lo] >= DAY {
                lo += 1;
            }
            s.burstiness = s.burstiness.max((hi - lo + 1) as u64);
        }
        s
    }
}

pub fn seq(alert_id: &str) -> &str {
    alert_id.rsplit('-').next().unwrap_or(alert_id)
}

fn slice_item(alert: &Alert, account: &str, s: &SliceStats) -> EvidenceItem {
    let (ws, we) = alert.window;
    let mut f = vec![
        ("total_amount", FieldValue::Amount(s.total_amount)),
        ("max_amount", FieldValue::Amount(s.max_amount)),
        ("tx_count", FieldValue::Count(s.tx_count)),
        ("window_start", FieldValue::Timestamp(ws)),
        ("window_end", FieldValue::Timestamp(we)),
        ("cash_deposit_total", FieldValue::Amount(s.cash_deposit_total)),
        ("cash_deposit_count", FieldValue::Count(s.cash_deposit_count)),
        ("wire_total", FieldValue::Amount(s.wire_total)),
        ("distinct_sources", FieldValue::Count(s.distinct_sources)),
        ("burstiness", FieldValue::Count(s.burstiness)),
    ];
    let mut text = format!(
        "Transaction slice for alert {} on account {} ({}) from {} to {}: {} transactions totaling {}, largest {}. Cash deposits: {} totaling {}. Wire total {}. Distinct sources {}. Peak daily count {}.",
        alert.id,
        account,
        alert.customer_id,
        format_timestamp(ws),
        format_timestamp(we),
        s.tx_count,
        format_currency(s.total_amount),
        format_currency(s.max_amount),
        s.cash_deposit_count,
        format_currency(s.cash_deposit_total),
        format_currency(s.wire_total),
        s.distinct_sources,
        s.burstiness,
    );
    if let Some(cp) = &s.top_counterparty {
        text.push_str(&format!(" Top counterparty {cp}."));
        f.push(("top_counterparty", FieldValue::Counterparty(cp.clone())));
    }
    if let Some(cp) = &s.high_risk_counterparty {
        text.push_str(&format!(" Flagged counterparty {cp}."));
        f.push(("high_risk_counterparty", FieldValue::Counterparty(cp.clone())));
    }
    EvidenceItem {
        id: format!("ev-transaction-{}", seq(&alert.id)),
        source_type: SourceType::Transaction,
        effective_time: alert.alert_time,
        acl_tag: AclTag::Public,
        canonical_text: text,
        structured_fields: fields(f),
        version: 1,
        supersedes: None,
        scope: EvidenceScope {
            customer_id: Some(alert.customer_id.clone()),
            alert_id: Some(alert.id.clone()),
            window: Some(alert.window),
            alert_type: None,
        },
    }
}

fn trigger_item(alert: &Alert, total: i64, prior: u32) -> EvidenceItem {
    let threshold = alert.trigger.thresholds.values().copied().max().unwrap_or(0);
    let rules = alert.trigger.rule_ids.join(", ");
    let text = format!(
        "Trigger for alert {} (rules {}, score {:.4}) on customer {} at {}: total amount {}, rule threshold {}, prior alerts {}.",
        alert.id,
        rules,
        alert.trigger.max_score(),
        alert.customer_id,
        format_timestamp(alert.alert_time),
        format_currency(total),
        format_currency(threshold),
        prior,
    );
    EvidenceItem {
        id: format!("ev-trigger-{}", seq(&alert.id)),
        source_type: SourceType::Trigger,
        effective_time: alert.alert_time,
        acl_tag: AclTag::Public,
        canonical_text: text,
        structured_fields: fields(vec![
            ("total_amount", FieldValue::Amount(total)),
            ("threshold", FieldValue::Amount(threshold)),
            ("prior_alert_count", FieldValue::Count(u64::from(prior))),
            ("alert_time", FieldValue::Timestamp(alert.alert_time)),
        ]),
        version: 1,
        supersedes: None,
        scope: EvidenceScope {
            customer_id: Some(alert.customer_id.clone()),
            alert_id: Some(alert.id.clone()),
            window: Some(alert.window),
            alert_type: Some(alert.alert_type),
        },
    }
}

fn kyc_item(c: &super::Customer) -> EvidenceItem {
    let kind = match c.customer_type {
        crate::model::CustomerType::Individual => "individual",
        crate::model::CustomerType::Business => "business",
    };
    let text = format!(
        "KYC profile for customer {} ({kind}, industry {}): risk rating {}, onboarded {}.",
        c.customer_id,
        c.industry_code,
        c.risk_rating.as_str(),
        format_timestamp(c.onboarding_time),
    );
    EvidenceItem {
        id: format!("ev-kyc-{}", seq(&c.customer_id)),
        source_type: SourceType::Kyc,
        effective_time: c.onboarding_time,
        acl_tag: AclTag::Restricted,
        canonical_text: text,
        structured_fields: fields(vec![
            ("risk_rating", FieldValue::RiskTier(c.risk_rating)),
            ("onboarding_time", FieldValue::Timestamp(c.onboarding_time)),
        ]),
        version: 1,
        supersedes: None,
        scope: EvidenceScope { customer_id: Some(c.customer_id.clone()), ..Default::default() },
    }
}

/// Counterparties that are high-risk both by tier and by geography.
pub(crate) fn high_risk_set(world: &World) -> BTreeSet<String> {
    let geos: BTreeSet<&str> = world.config.high_risk_geo_set.iter().map(String::as_str).collect();
    world
        .accounts
        .iter()
        .filter(|a| a.risk_tier == RiskTier::High && geos.contains(a.geography.as_str()))
        .map(|a| a.id.clone())
        .collect()
}

pub(crate) fn alert_stats(world: &World, alert: &Alert, tx_by_id: &HashMap<&str, &Transaction>, hr: &BTreeSet<String>) -> (String, SliceStats) {
    let account = world
        .accounts
        .iter()
        .find(|a| a.customer_id == alert.customer_id)
        .map(|a| a.id.clone())
        .unwrap_or_default();
    let txs: Vec<&Transaction> =
        alert.transaction_ids.iter().filter_map(|id| tx_by_id.get(id.as_str()).copied()).collect();
    let stats = SliceStats::compute(&account, &txs, hr);
    (account, stats)
}

/// Policies, KYC for every alerted customer, and one trigger and slice item per alert.
pub(crate) fn base_corpus(world: &World) -> Vec<EvidenceItem> {
    let index = world.index();
    let tx_by_id: HashMap<&str, &Transaction> =
        world.transactions.iter().map(|t| (t.id.as_str(), t)).collect();
    let hr = high_risk_set(world);
    let mut items = policy_items(&world.config);
    let alerted: BTreeSet<&str> = world.alerts.iter().map(|a| a.customer_id.as_str()).collect();
    items.extend(world.customers.iter().filter(|c| alerted.contains(c.customer_id.as_str())).map(kyc_item));
    for alert in &world.alerts {
        let (account, stats) = alert_stats(world, alert, &tx_by_id, &hr);
        let prior = index.prior_alert_count(&alert.customer_id, alert.alert_time);
        items.push(trigger_item(alert, stats.total_amount, prior));
        items.push(slice_item(alert, &account, &stats));
    }
    items
}

/// One closed case per training alert of the split.
pub fn build_case_memory(split: &super::DatasetSplit, world: &World) -> Vec<EvidenceItem> {
    let alert_ids = &split.train_alert_ids;
    let tx_by_id: HashMap<&str, &Transaction> =
        world.transactions.iter().map(|t| (t.id.as_str(), t)).collect();
    let hr = high_risk_set(world);
    let wanted: BTreeSet<&str> = alert_ids.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    for alert in world.alerts.iter().filter(|a| wanted.contains(a.id.as_str())) {
        let (_, stats) = alert_stats(world, alert, &tx_by_id, &hr);
        let outcome = match alert.label {
            Some(Label::Suspicious) => "escalated",
            _ => "dismissed",
        };
        let text = format!(
            "Closed case for customer {}: {} totaling {}, peak daily count {}, outcome {outcome}.",
            alert.customer_id,
            typology_phrase(alert.alert_type),
            format_currency(stats.total_amount),
            stats.burstiness,
        );
        out.push(EvidenceItem {
            id: format!("ev-case-{}", seq(&alert.id)),
            source_type: SourceType::Case,
            effective_time: alert.alert_time,
            acl_tag: AclTag::Restricted,
            canonical_text: text,
            structured_fields: fields(vec![
                ("total_amount", FieldValue::Amount(stats.total_amount)),
                ("burstiness", FieldValue::Count(stats.burstiness)),
            ]),
            version: 1,
            supersedes: None,
            scope: EvidenceScope {
                customer_id: Some(alert.customer_id.clone()),
                alert_id: Some(alert.id.clone()),
                window: Some(alert.window),
                alert_type: Some(alert.alert_type),
            },
        });
    }
    out
}

/// The alert's own trigger and transaction-slice items rebuilt from its
/// context alone. A counterparty counts as high-risk when it is high tier
/// and received a wire into a high-risk geography.
pub fn alert_items(ctx: &AlertContext) -> [EvidenceItem; 2] {
    let geos: BTreeSet<&str> = ctx.params.high_risk_geos.iter().map(String::as_str).collect();
    let hr: BTreeSet<String> = ctx
        .transactions
        .iter()
        .filter(|t| t.channel == Channel::Wire && geos.contains(t.geography.as_str()))
        .map(|t| t.dst_account.clone())
        .filter(|a| ctx.counterparty_risk.get(a) == Some(&RiskTier::High))
        .collect();
    let txs: Vec<&Transaction> = ctx.transactions.iter().collect();
    let stats = SliceStats::compute(&ctx.account_id, &txs, &hr);
    [
        trigger_item(&ctx.alert, stats.total_amount, ctx.customer.prior_alert_count),
        slice_item(&ctx.alert, &ctx.account_id, &stats),
    ]
}
