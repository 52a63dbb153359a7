//! Laundering pattern injection.

use rand::Rng;

use super::{account_id, Draft, TypologyInstance, DAY, EPOCH_START, HOUR};
use crate::model::{AlertType, Channel, CASH_SOURCE};

/// (span in days, minimum regular accounts) needed to place one instance.
pub(crate) fn requirements(t: AlertType) -> (i64, usize) {
    match t {
        AlertType::Structuring => (3, 2),
        AlertType::RapidMovement => (2, 7),
        AlertType::HighRiskCounterparty => (7, 2),
        AlertType::FanIn => (8, 10),
    }
}

/// Injects instance `k` of typology `t` on a laundering-pool account.
pub(crate) fn embed_typology(draft: &mut Draft<'_>, t: AlertType, k: usize, rng: &mut impl Rng) -> TypologyInstance {
    let (span_days, _) = requirements(t);
    let latest = draft.config.sim_end() - (span_days + 1) * DAY;
    let t0 = rng.random_range(EPOCH_START + DAY..latest.max(EPOCH_START + DAY + 1));
    let primary = draft.pool[rng.random_range(0..draft.pool.len())];
    let tag = t.as_str();
    let mut keys = Vec::new();
    let mut key = |j: usize| {
        let id = format!("t:{tag}:{k:06}:{j:02}");
        keys.push(id.clone());
        id
    };

    match t {
        AlertType::Structuring => {
            let threshold = draft.config.structuring_threshold;
            let n = rng.random_range(3..=6usize);
            let lo = threshold * 30 / 100;
            let hi = threshold * 95 / 100;
            let amounts = loop {
                let a: Vec<i64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
                if a.iter().sum::<i64>() > threshold {
                    break a;
                }
            };
            let mut offsets: Vec<i64> = (0..n).map(|_| rng.random_range(0..72 * HOUR - HOUR)).collect();
            offsets.sort_unstable();
            for (j, (amount, off)) in amounts.into_iter().zip(offsets).enumerate() {
                let id = key(j);
                draft.push(id, t0 + off, amount, CASH_SOURCE.into(), account_id(primary), Channel::Cash, "US".into());
            }
        }
        AlertType::RapidMovement => {
            let hops = rng.random_range(3..=5usize);
            let mut chain = vec![draft.pick_other(rng, &[primary]), primary];
            while chain.len() < hops + 1 {
                let next = draft.pick_other(rng, &chain);
                chain.push(next);
            }
            let mut amount = rng.random_range(200_000..=2_000_000i64);
            let mut ts = t0;
            for j in 0..hops {
                let channel = [Channel::Wire, Channel::Ach, Channel::Internal][rng.random_range(0..3)];
                let dst = chain[j + 1];
                let geography = draft.accounts[dst].geography.clone();
                let id = key(j);
                draft.push(id, ts, amount, account_id(chain[j]), account_id(dst), channel, geography);
                ts += rng.random_range(HOUR / 2..10 * HOUR);
                let f = rng.random_range(0.86..0.98);
                amount = (amount as f64 * f).floor() as i64;
            }
        }
        AlertType::HighRiskCounterparty => {
            let regular = draft.regular();
            let target = rng.random_range(regular..draft.accounts.len());
            let geography = draft.accounts[target].geography.clone();
            let n = rng.random_range(2..=4usize);
            let mut offsets: Vec<i64> = (0..n).map(|_| rng.random_range(0..6 * DAY)).collect();
            offsets.sort_unstable();
            for (j, off) in offsets.into_iter().enumerate() {
                let amount = rng.random_range(100_000..=900_000);
                let id = key(j);
                draft.push(id, t0 + off, amount, account_id(primary), account_id(target), Channel::Wire, geography.clone());
            }
        }
        AlertType::FanIn => {
            let n = rng.random_range(5..=8usize);
            let mut sources = Vec::with_capacity(n);
            while sources.len() < n {
                let mut exclude = sources.clone();
                exclude.push(primary);
                sources.push(draft.pick_other(rng, &exclude));
            }
            let mut offsets: Vec<i64> = (0..n).map(|_| rng.random_range(0..6 * DAY)).collect();
            offsets.sort_unstable();
            let mut sum = 0i64;
            let mut last = t0;
            for (j, (src, off)) in sources.iter().zip(offsets).enumerate() {
                let amount = rng.random_range(100_000..=500_000);
                sum += amount;
                last = t0 + off;
                let channel = if rng.random_bool(0.5) { Channel::Ach } else { Channel::Wire };
                let id = key(j);
                draft.push(id, last, amount, account_id(*src), account_id(primary), channel, "US".into());
            }
            let mut exclude = sources.clone();
            exclude.push(primary);
            let dst = draft.pick_other(rng, &exclude);
            let amount = (sum as f64 * rng.random_range(0.72..0.95)).floor() as i64;
            let geography = draft.accounts[dst].geography.clone();
            let id = key(n);
            draft.push(id, last + rng.random_range(HOUR..DAY), amount, account_id(primary), account_id(dst), Channel::Wire, geography);
        }
    }

    TypologyInstance { alert_type: t, account_id: account_id(primary), transaction_ids: keys }
}
