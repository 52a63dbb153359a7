//! Controlled fault injection on top of reference drafts.

use serde::{Deserialize, Serialize};

use super::draft::{DraftParagraph, DraftRecord};
use crate::model::{ClaimKind, ClaimValue, Comparator, EvidenceBundle, EvidenceItem, SourceType};
use crate::rng::{stream_key, unit};
use crate::text::content_token_set;

/// Sentences no policy text supports.
pub const UNSUPPORTED_POLICY_SENTENCES: &[&str] = &[
    "Policy requires escalation within 24 hours of detection.",
    "Guidelines mandate notifying the board before closure.",
    "Senior sign-off is compulsory for amounts above five million.",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultRates {
    #[serde(default)]
    pub p_fabricated_citation: f64,
    #[serde(default)]
    pub p_numeric_error: f64,
    #[serde(default)]
    pub p_policy_hallucination: f64,
    #[serde(default)]
    pub p_unsupported_entity: f64,
}

impl FaultRates {
    pub fn uniform(p: f64) -> Self {
        Self { p_fabricated_citation: p, p_numeric_error: p, p_policy_hallucination: p, p_unsupported_entity: p }
    }

    pub fn all(&self) -> [(&'static str, f64); 4] {
        [
            ("p_fabricated_citation", self.p_fabricated_citation),
            ("p_numeric_error", self.p_numeric_error),
            ("p_policy_hallucination", self.p_policy_hallucination),
            ("p_unsupported_entity", self.p_unsupported_entity),
        ]
    }
}

/// What the injector may draw on besides the bundle.
pub(crate) struct FaultPools<'a> {
    pub lexicon: &'a [String],
    pub policies: &'a [EvidenceItem],
}

fn draw(seed: u64, key: &str) -> f64 {
    unit(seed, key, 0)
}

fn pick(seed: u64, key: &str, n: usize) -> usize {
    (stream_key(seed, key, 1) % n as u64) as usize
}

/// Applies each fault type according to its rate. Every draw is keyed by
/// `(seed, alert, fault, position)`, so the output is a pure function of its
/// inputs.
pub(crate) fn inject(draft: &mut DraftRecord, rates: &FaultRates, seed: u64, bundle: &EvidenceBundle, pools: &FaultPools<'_>) {
    let alert = draft.alert_id.clone();
    if rates.p_numeric_error > 0.0 && draw(seed, &format!("numeric:{alert}")) < rates.p_numeric_error {
        perturb_numeric(draft, seed);
    }
    if rates.p_policy_hallucination > 0.0 && draw(seed, &format!("policy:{alert}")) < rates.p_policy_hallucination {
        insert_policy_claim(draft, seed, bundle, pools);
    }
    if rates.p_unsupported_entity > 0.0 && draw(seed, &format!("entity:{alert}")) < rates.p_unsupported_entity {
        insert_entity(draft, seed, bundle, pools);
    }
    if rates.p_fabricated_citation > 0.0 {
        fabricate_citations(draft, seed, rates.p_fabricated_citation);
    }
}

/// Each citation occurrence is independently redirected, with probability
/// `p`, to one id that does not exist.
fn fabricate_citations(draft: &mut DraftRecord, seed: u64, p: f64) {
    let alert = draft.alert_id.clone();
    let mut fake: Option<String> = None;
    for (i, para) in draft.paragraphs.iter_mut().enumerate() {
        for j in 0..para.citations.len() {
            if draw(seed, &format!("fabricate:{alert}:{i}:{j}")) >= p {
                continue;
            }
            let old = para.citations[j].clone();
            let id = fake
                .get_or_insert_with(|| {
                    let ty = SourceType::from_evidence_id(&old).map(|t| t.as_str()).unwrap_or("policy");
                    format!("ev-{ty}-x{:08x}", stream_key(seed, &alert, 99) as u32)
                })
                .clone();
            para.citations[j] = id.clone();
            for c in para.claims.iter_mut().filter(|c| c.evidence_id == old) {
                c.evidence_id = id.clone();
            }
        }
    }
}

fn perturb_numeric(draft: &mut DraftRecord, seed: u64) {
    let alert = draft.alert_id.clone();
    let slots: Vec<(usize, usize)> = draft
        .paragraphs
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            p.claims.iter().enumerate().filter_map(move |(j, c)| {
                matches!(
                    c.kind,
                    ClaimKind::Amount | ClaimKind::Count | ClaimKind::Timestamp | ClaimKind::ThresholdComparison
                )
                .then_some((i, j))
            })
        })
        .collect();
    if slots.is_empty() {
        return;
    }
    let (i, j) = slots[pick(seed, &format!("numeric-slot:{alert}"), slots.len())];
    let step = 1 + pick(seed, &format!("numeric-delta:{alert}"), 40) as i64;
    let claim = &mut draft.paragraphs[i].claims[j];
    let ClaimValue::Number(v) = claim.value else { return };
    let nv = match claim.kind {
        ClaimKind::Amount => v + step * 100,
        ClaimKind::Count => v + 1 + step % 3,
        ClaimKind::Timestamp => v + step * 3_600,
        // push the stated value to the wrong side of the comparison; the
        // threshold itself is rendered from its own claim
        ClaimKind::ThresholdComparison => {
            let thr = draft.paragraphs[i]
                .claims
                .iter()
                .find(|c| c.kind == ClaimKind::Amount && c.field_path == "threshold")
                .and_then(|c| match c.value {
                    ClaimValue::Number(n) => Some(n),
                    _ => None,
                })
                .unwrap_or(v);
            let claim = &draft.paragraphs[i].claims[j];
            match claim.comparator {
                Some(Comparator::Gt | Comparator::Ge) => (thr - step * 100).max(0),
                _ => thr + step * 100,
            }
        }
        _ => return,
    };
    draft.paragraphs[i].claims[j].value = ClaimValue::Number(nv);
}

fn insert_policy_claim(draft: &mut DraftRecord, seed: u64, bundle: &EvidenceBundle, pools: &FaultPools<'_>) {
    let alert = draft.alert_id.clone();
    let policy = bundle
        .of_type(SourceType::Policy)
        .next()
        .or_else(|| {
            (!pools.policies.is_empty())
                .then(|| &pools.policies[pick(seed, &format!("policy-pick:{alert}"), pools.policies.len())])
        });
    let Some(policy) = policy else { return };
    // a sentence sharing no content word with the cited policy
    let vocab = content_token_set(&policy.canonical_text);
    let n = UNSUPPORTED_POLICY_SENTENCES.len();
    let start = pick(seed, &format!("policy-text:{alert}"), n);
    let sentence = (0..n)
        .map(|k| UNSUPPORTED_POLICY_SENTENCES[(start + k) % n])
        .find(|s| content_token_set(s).is_disjoint(&vocab))
        .unwrap_or(UNSUPPORTED_POLICY_SENTENCES[start]);
    let mut p = DraftParagraph::default();
    p.cite(&policy.id).lit(sentence);
    draft.paragraphs.push(p);
}

fn insert_entity(draft: &mut DraftRecord, seed: u64, bundle: &EvidenceBundle, pools: &FaultPools<'_>) {
    if pools.lexicon.is_empty() {
        return;
    }
    let alert = draft.alert_id.clone();
    let anchor = bundle
        .of_type(SourceType::Transaction)
        .find(|e| e.scope.alert_id.as_deref() == Some(alert.as_str()))
        .or_else(|| bundle.items.iter().find(|e| e.source_type != SourceType::Policy));
    let text = anchor.map(|a| a.canonical_text.as_str()).unwrap_or("");
    let start = pick(seed, &format!("entity-pick:{alert}"), pools.lexicon.len());
    let entity = (0..pools.lexicon.len())
        .map(|k| &pools.lexicon[(start + k) % pools.lexicon.len()])
        .find(|e| !contains_token(text, e));
    let Some(entity) = entity else { return };
    let mut p = DraftParagraph::default();
    if let Some(a) = anchor {
        p.cite(&a.id);
    }
    p.lit(format!("Related transfers also involve {entity}."));
    draft.paragraphs.push(p);
}

/// Whole-token containment, so `acc-1` is not found inside `acc-10`.
pub fn contains_token(text: &str, token: &str) -> bool {
    text.match_indices(token).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + token.len()..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric() || c == '-')
            && !after.is_some_and(|c| c.is_alphanumeric() || c == '-')
    })
}
