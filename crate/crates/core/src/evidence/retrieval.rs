//! Structured filtering, lexical ranking and quota'd bundle selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::index::{jaccard, token_set, tokenize, EvidenceIndex};
use crate::model::{
    AclTag, AlertContext, EvidenceBundle, EvidenceItem, FilterFlags, Indicator, SelectionReason,
    SourceType, Timestamp, TraceEntry,
};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DEDUP_JACCARD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclContext {
    pub principal: String,
    pub clearance: AclTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardFilters {
    pub customer_id: String,
    pub window: (Timestamp, Timestamp),
    pub alert_time: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert_type: Option<crate::model::AlertType>,
    pub acl_clearance: AclTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub alert_id: String,
    pub query_text: String,
    pub hard_filters: HardFilters,
    pub quota: BTreeMap<SourceType, usize>,
    pub k_total: usize,
}

pub fn default_quota() -> BTreeMap<SourceType, usize> {
    BTreeMap::from([
        (SourceType::Policy, 2),
        (SourceType::Kyc, 1),
        (SourceType::Trigger, 1),
        (SourceType::Transaction, 1),
        (SourceType::Case, 2),
    ])
}

pub const DEFAULT_K_TOTAL: usize = 8;

fn keywords(ind: Indicator) -> &'static str {
    match ind {
        Indicator::StructuringPattern => "structuring sub-threshold cash deposits reporting threshold",
        Indicator::RapidMovement => "rapid movement pass-through layering forwarding transfers",
        Indicator::HighRiskCounterparty => "high-risk counterparty jurisdiction wire transfers",
        Indicator::FanIn => "fan-in funnel distinct sources consolidated outbound transfer",
        Indicator::PriorAlerts => "prior alerts closer monitoring",
    }
}

impl RetrievalQuery {
    /// Query for an alert: its rule type, the indicators active in its
    /// facts, and the alert and customer identifiers.
    pub fn from_context(ctx: &AlertContext, clearance: AclTag) -> Self {
        let mut parts: Vec<&str> = vec![keywords(ctx.alert.alert_type.indicator())];
        for ind in ctx.active_indicators() {
            if ind != ctx.alert.alert_type.indicator() {
                parts.push(keywords(ind));
            }
        }
        if ctx.active_indicators().is_empty() {
            parts.push("general monitoring guidance");
        }
        let query_text = format!("{} {} {} {}", parts.join(" "), ctx.alert.id, ctx.alert.customer_id, ctx.account_id);
        Self {
            alert_id: ctx.alert.id.clone(),
            query_text,
            hard_filters: HardFilters {
                customer_id: ctx.alert.customer_id.clone(),
                window: ctx.alert.window,
                alert_time: ctx.alert.alert_time,
                alert_type: Some(ctx.alert.alert_type),
                acl_clearance: clearance,
            },
            quota: default_quota(),
            k_total: DEFAULT_K_TOTAL,
        }
    }
}

/// Per-item results of the hard filters.
pub fn filter_flags(index: &EvidenceIndex, item: &EvidenceItem, q: &RetrievalQuery) -> FilterFlags {
    let f = &q.hard_filters;
    let scope = &item.scope;
    let scope_ok = match item.source_type {
        SourceType::Policy => true,
        SourceType::Kyc => scope.customer_id.as_deref() == Some(f.customer_id.as_str()),
        SourceType::Trigger => scope.alert_id.as_deref() == Some(q.alert_id.as_str()),
        SourceType::Transaction => {
            scope.customer_id.as_deref() == Some(f.customer_id.as_str())
                && scope.window.is_some_and(|(lo, hi)| lo <= f.window.1 && f.window.0 <= hi)
        }
        // the index only ever holds training cases; never the alert's own
        SourceType::Case => scope.alert_id.as_deref() != Some(q.alert_id.as_str()),
    };
    let current_version = !index
        .superseded_by(&item.id)
        .any(|newer| newer.effective_time <= f.alert_time);
    FilterFlags {
        acl: item.acl_tag <= f.acl_clearance,
        time: item.effective_time <= f.alert_time,
        scope: scope_ok,
        current_version,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub examined: usize,
    pub acl: usize,
    pub time: usize,
    pub scope: usize,
    pub superseded: usize,
}

/// Item positions that pass every hard filter, plus counts of what each
/// filter rejected.
pub fn structured_filter(index: &EvidenceIndex, q: &RetrievalQuery) -> (Vec<usize>, FilterStats) {
    let mut stats = FilterStats { examined: index.len(), ..Default::default() };
    let mut keep = Vec::new();
    for (pos, item) in index.items().iter().enumerate() {
        let f = filter_flags(index, item, q);
        stats.acl += usize::from(!f.acl);
        stats.time += usize::from(!f.time);
        stats.scope += usize::from(!f.scope);
        stats.superseded += usize::from(!f.current_version);
        if f.passed() {
            keep.push(pos);
        }
    }
    (keep, stats)
}

/// Okapi BM25 with Lucene's idf, summed over query tokens.
pub fn bm25(index: &EvidenceIndex, pos: usize, query_tokens: &[String]) -> f64 {
    let n = index.len() as f64;
    let len = f64::from(index.doc_len(pos));
    let avg = index.avg_doc_len().max(f64::MIN_POSITIVE);
    let mut score = 0.0;
    for t in query_tokens {
        let postings = index.postings(t);
        let Ok(i) = postings.binary_search_by_key(&pos, |p| p.0) else {
            continue;
        };
        let tf = f64::from(postings[i].1);
        let df = postings.len() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        score += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * len / avg));
    }
    score
}

/// Candidates by descending score, ties by ascending id.
pub fn rank_semantic(index: &EvidenceIndex, candidates: &[usize], query_text: &str) -> Vec<(usize, f64)> {
    let tokens = tokenize(query_text);
    let mut scored: Vec<(usize, f64)> = candidates.iter().map(|p| (*p, bm25(index, *p, &tokens))).collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| index.item(a.0).id.cmp(&index.item(b.0).id))
    });
    scored
}

fn is_own(item: &EvidenceItem, q: &RetrievalQuery) -> bool {
    matches!(item.source_type, SourceType::Trigger | SourceType::Transaction)
        && item.scope.alert_id.as_deref() == Some(q.alert_id.as_str())
}

/// Greedy selection under per-type quota, the overall cap, and same-type
/// near-duplicate suppression. The alert's own trigger and transaction slice
/// are always taken first.
pub fn select_bundle(index: &EvidenceIndex, scored: &[(usize, f64)], q: &RetrievalQuery) -> EvidenceBundle {
    let passed = FilterFlags { acl: true, time: true, scope: true, current_version: true };
    let mut trace = Vec::with_capacity(scored.len());
    let mut chosen: Vec<usize> = Vec::new();
    let mut per_type: BTreeMap<SourceType, usize> = BTreeMap::new();
    let mut sets: Vec<(SourceType, String, BTreeSet<String>)> = Vec::new();

    for (pos, score) in scored {
        let item = index.item(*pos);
        if is_own(item, q) {
            chosen.push(*pos);
            *per_type.entry(item.source_type).or_default() += 1;
            sets.push((item.source_type, item.id.clone(), token_set(&item.canonical_text)));
            trace.push(TraceEntry {
                item_id: item.id.clone(),
                filters: passed.clone(),
                score: *score,
                reason: SelectionReason::Coverage,
                duplicate_of: None,
            });
        }
    }

    for (pos, score) in scored {
        let item = index.item(*pos);
        if is_own(item, q) {
            continue;
        }
        let ty = item.source_type;
        let mut duplicate_of = None;
        let reason = if chosen.len() >= q.k_total {
            SelectionReason::TotalCapReached
        } else if per_type.get(&ty).copied().unwrap_or(0) >= q.quota.get(&ty).copied().unwrap_or(0) {
            SelectionReason::QuotaFull
        } else {
            let tokens = token_set(&item.canonical_text);
            duplicate_of = sets
                .iter()
                .find(|(t, _, s)| *t == ty && jaccard(s, &tokens) > DEDUP_JACCARD)
                .map(|(_, id, _)| id.clone());
            if duplicate_of.is_some() {
                SelectionReason::Duplicate
            } else {
                chosen.push(*pos);
                *per_type.entry(ty).or_default() += 1;
                sets.push((ty, item.id.clone(), tokens));
                SelectionReason::Selected
            }
        };
        trace.push(TraceEntry { item_id: item.id.clone(), filters: passed.clone(), score: *score, reason, duplicate_of });
    }

    if chosen.is_empty() {
        trace.push(TraceEntry {
            item_id: String::new(),
            filters: FilterFlags { acl: false, time: false, scope: false, current_version: false },
            score: 0.0,
            reason: SelectionReason::EmptyBundle,
            duplicate_of: None,
        });
    }
    let mut bundle = EvidenceBundle {
        alert_id: q.alert_id.clone(),
        items: chosen.into_iter().map(|p| index.item(p).clone()).collect(),
        quota: q.quota.clone(),
        retrieval_trace: trace,
    };
    bundle.normalize();
    bundle
}

/// Filter, rank and select in one call.
pub fn retrieve(index: &EvidenceIndex, q: &RetrievalQuery) -> EvidenceBundle {
    let (candidates, _) = structured_filter(index, q);
    let scored = rank_semantic(index, &candidates, &q.query_text);
    select_bundle(index, &scored, q)
}
