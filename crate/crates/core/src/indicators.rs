//! Indicator functions over alert facts.
//!
//! Each indicator reads only the transactions inside the alert window, the
//! customer profile, the counterparty risk map and the indicator parameters.
//! Transaction order never matters: every function works on sorted copies.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{AlertContext, Amount, Channel, Indicator, RiskTier, Transaction};

pub const STRUCTURING_SPAN_SECS: i64 = 72 * 3600;
pub const STRUCTURING_MIN_DEPOSITS: usize = 3;
pub const RAPID_SPAN_SECS: i64 = 48 * 3600;
pub const RAPID_MIN_HOPS: usize = 3;
/// Forwarded share for a rapid-movement hop, in percent.
pub const RAPID_FORWARD_PCT: i64 = 85;
pub const FAN_IN_SPAN_SECS: i64 = 7 * 86_400;
pub const FAN_IN_MIN_SOURCES: usize = 5;
/// Outbound share of the fan-in inflow, in percent.
pub const FAN_IN_OUTBOUND_PCT: i64 = 70;
pub const HIGH_RISK_MIN_WIRES: usize = 2;
pub const PRIOR_ALERTS_MIN: u32 = 2;

pub fn compute(ctx: &AlertContext) -> BTreeMap<Indicator, bool> {
    Indicator::ALL
        .into_iter()
        .map(|i| (i, evaluate(ctx, i)))
        .collect()
}

pub fn evaluate(ctx: &AlertContext, indicator: Indicator) -> bool {
    match indicator {
        Indicator::StructuringPattern => structuring_witness(ctx).is_some(),
        Indicator::RapidMovement => rapid_witness(ctx).is_some(),
        Indicator::HighRiskCounterparty => !high_risk_counterparties(ctx).is_empty(),
        Indicator::FanIn => fan_in_witness(ctx).is_some(),
        Indicator::PriorAlerts => ctx.customer.prior_alert_count >= PRIOR_ALERTS_MIN,
    }
}

/// Transactions inside the closed alert window, sorted by (timestamp, id).
pub fn in_window(ctx: &AlertContext) -> Vec<&Transaction> {
    let (start, end) = ctx.alert.window;
    let mut txs: Vec<&Transaction> = ctx
        .transactions
        .iter()
        .filter(|t| t.timestamp >= start && t.timestamp <= end)
        .collect();
    txs.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    txs
}

/// Structuring: an account receives at least three cash deposits within 72h
/// whose sum exceeds the threshold, while no cash deposit to that account in
/// the window reaches the threshold.
///
/// Returns the receiving account and the ids of its cash deposits.
pub fn structuring_witness(ctx: &AlertContext) -> Option<(String, Vec<String>)> {
    let threshold = ctx.params.structuring_threshold;
    let mut by_account: BTreeMap<&str, Vec<&Transaction>> = BTreeMap::new();
    for tx in in_window(ctx) {
        if tx.channel == Channel::Cash {
            by_account.entry(tx.dst_account.as_str()).or_default().push(tx);
        }
    }
    for (account, deposits) in by_account {
        if deposits.iter().any(|d| d.amount >= threshold) {
            continue;
        }
        for (i, first) in deposits.iter().enumerate() {
            let run: Vec<&&Transaction> = deposits[i..]
                .iter()
                .take_while(|d| d.timestamp - first.timestamp <= STRUCTURING_SPAN_SECS)
                .collect();
            let sum: Amount = run.iter().map(|d| d.amount).sum();
            if run.len() >= STRUCTURING_MIN_DEPOSITS && sum > threshold {
                return Some((
                    account.to_string(),
                    deposits.iter().map(|d| d.id.clone()).collect(),
                ));
            }
        }
    }
    None
}

fn forwards(prev: &Transaction, next: &Transaction) -> bool {
    prev.dst_account == next.src_account
        && next.timestamp > prev.timestamp
        && next.timestamp - prev.timestamp <= RAPID_SPAN_SECS
        && next.amount * 100 >= prev.amount * RAPID_FORWARD_PCT
}

/// Rapid movement: a chain of at least three non-cash transfers, each hop
/// forwarding at least 85% of what it received, all within 48h.
///
/// Returns the ids of the first witness chain found.
pub fn rapid_witness(ctx: &AlertContext) -> Option<Vec<String>> {
    let txs: Vec<&Transaction> = in_window(ctx)
        .into_iter()
        .filter(|t| t.channel != Channel::Cash)
        .collect();
    fn extend<'a>(
        txs: &[&'a Transaction],
        chain: &mut Vec<&'a Transaction>,
    ) -> bool {
        if chain.len() >= RAPID_MIN_HOPS {
            return true;
        }
        let first = chain[0].timestamp;
        let last = *chain.last().unwrap();
        for next in txs {
            if next.timestamp - first <= RAPID_SPAN_SECS && forwards(last, next) {
                chain.push(next);
                if extend(txs, chain) {
                    return true;
                }
                chain.pop();
            }
        }
        false
    }
    for start in &txs {
        let mut chain = vec![*start];
        if extend(&txs, &mut chain) {
            return Some(chain.iter().map(|t| t.id.clone()).collect());
        }
    }
    None
}

/// Counterparties receiving at least two wires from a high-risk jurisdiction
/// while carrying a high risk tier.
pub fn high_risk_counterparties(ctx: &AlertContext) -> BTreeSet<String> {
    let mut wires: BTreeMap<&str, usize> = BTreeMap::new();
    for tx in in_window(ctx) {
        if tx.channel == Channel::Wire
            && ctx.params.high_risk_geos.iter().any(|g| g == &tx.geography)
            && ctx.counterparty_risk.get(&tx.dst_account) == Some(&RiskTier::High)
        {
            *wires.entry(tx.dst_account.as_str()).or_default() += 1;
        }
    }
    wires
        .into_iter()
        .filter(|(_, n)| *n >= HIGH_RISK_MIN_WIRES)
        .map(|(a, _)| a.to_string())
        .collect()
}

/// Fan-in witness: the collecting account, the outbound transaction id and
/// the inflow sum it is measured against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FanInWitness {
    pub account: String,
    pub outbound_id: String,
    pub inflow_sum: Amount,
}

/// Fan-in: at least five distinct sources pay into one account within 7 days,
/// then a single outbound of at least 70% of that inflow follows within 7 days.
pub fn fan_in_witness(ctx: &AlertContext) -> Option<FanInWitness> {
    let txs = in_window(ctx);
    let mut inflows: BTreeMap<&str, Vec<&Transaction>> = BTreeMap::new();
    for tx in &txs {
        inflows.entry(tx.dst_account.as_str()).or_default().push(tx);
    }
    for (account, ins) in inflows {
        let outs: Vec<&&Transaction> = txs.iter().filter(|t| t.src_account == account).collect();
        if outs.is_empty() {
            continue;
        }
        for (i, first) in ins.iter().enumerate() {
            let mut sources = BTreeSet::new();
            let mut sum: Amount = 0;
            for tx in ins[i..]
                .iter()
                .take_while(|t| t.timestamp - first.timestamp <= FAN_IN_SPAN_SECS)
            {
                sources.insert(tx.src_account.as_str());
                sum += tx.amount;
                if sources.len() < FAN_IN_MIN_SOURCES {
                    continue;
                }
                let hit = outs.iter().find(|o| {
                    o.timestamp > tx.timestamp
                        && o.timestamp - tx.timestamp <= FAN_IN_SPAN_SECS
                        && o.amount * 100 >= sum * FAN_IN_OUTBOUND_PCT
                });
                if let Some(out) = hit {
                    return Some(FanInWitness {
                        account: account.to_string(),
                        outbound_id: out.id.clone(),
                        inflow_sum: sum,
                    });
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{context_with, tx};

    const H: i64 = 3600;

    #[test]
    fn structuring_requires_all_sub_threshold_and_sum_above() {
        let txs = vec![
            tx("tx-1", 0, 400_000, "cash-counter", "acc-1", Channel::Cash),
            tx("tx-2", 10 * H, 350_000, "cash-counter", "acc-1", Channel::Cash),
            tx("tx-3", 20 * H, 420_000, "cash-counter", "acc-1", Channel::Cash),
        ];
        let ctx = context_with(txs.clone());
        assert!(ctx.is_active(Indicator::StructuringPattern));

        // one deposit at the threshold: reported, not structured
        let mut raised = txs.clone();
        raised[2].amount = 1_000_000;
        assert!(!context_with(raised).is_active(Indicator::StructuringPattern));

        // sum at or below threshold
        let mut small = txs.clone();
        small[0].amount = 100_000;
        small[1].amount = 100_000;
        assert!(!context_with(small).is_active(Indicator::StructuringPattern));

        // spread beyond 72h
        let mut spread = txs;
        spread[2].timestamp = 80 * H;
        assert!(!context_with(spread).is_active(Indicator::StructuringPattern));
    }

    #[test]
    fn rapid_movement_needs_three_forwarding_hops() {
        let txs = vec![
            tx("tx-1", 0, 900_000, "acc-1", "acc-2", Channel::Wire),
            tx("tx-2", 5 * H, 800_000, "acc-2", "acc-3", Channel::Wire),
            tx("tx-3", 9 * H, 700_000, "acc-3", "acc-4", Channel::Internal),
        ];
        assert!(context_with(txs.clone()).is_active(Indicator::RapidMovement));
        let mut weak = txs.clone();
        weak[1].amount = 700_000; // 77.7% of 9,000
        assert!(!context_with(weak).is_active(Indicator::RapidMovement));
        let mut slow = txs;
        slow[2].timestamp = 50 * H;
        assert!(!context_with(slow).is_active(Indicator::RapidMovement));
    }

    #[test]
    fn fan_in_five_sources_then_outbound() {
        let mut txs: Vec<Transaction> = (0..5)
            .map(|i| {
                tx(&format!("tx-{i}"), i * H, 200_000, &format!("acc-s{i}"), "acc-1", Channel::Ach)
            })
            .collect();
        txs.push(tx("tx-out", 10 * H, 700_000, "acc-1", "acc-9", Channel::Wire));
        assert!(context_with(txs.clone()).is_active(Indicator::FanIn));
        txs.last_mut().unwrap().amount = 699_999;
        assert!(!context_with(txs).is_active(Indicator::FanIn));
    }

    #[test]
    fn high_risk_counterparty_needs_two_wires_geo_and_tier() {
        let mut a = tx("tx-1", 0, 300_000, "acc-1", "acc-9", Channel::Wire);
        a.geography = "IR".into();
        let mut b = a.clone();
        b.id = "tx-2".into();
        b.timestamp = H;
        let mut ctx = context_with(vec![a.clone(), b.clone()]);
        ctx.counterparty_risk.insert("acc-9".into(), RiskTier::High);
        ctx.refresh_indicators();
        assert!(ctx.is_active(Indicator::HighRiskCounterparty));
        ctx.counterparty_risk.insert("acc-9".into(), RiskTier::Medium);
        ctx.refresh_indicators();
        assert!(!ctx.is_active(Indicator::HighRiskCounterparty));
    }

    #[test]
    fn order_invariance() {
        let mut txs = vec![
            tx("tx-1", 0, 400_000, "cash-counter", "acc-1", Channel::Cash),
            tx("tx-2", 10 * H, 350_000, "cash-counter", "acc-1", Channel::Cash),
            tx("tx-3", 20 * H, 420_000, "cash-counter", "acc-1", Channel::Cash),
            tx("tx-4", 21 * H, 1_000_000, "acc-1", "acc-2", Channel::Wire),
        ];
        let before = context_with(txs.clone()).indicators;
        txs.reverse();
        assert_eq!(context_with(txs).indicators, before);
    }
}
