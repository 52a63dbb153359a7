//! Prompt documents: the alert summary, labeled evidence blocks and the output
//! contract, rendered deterministically.

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::model::{format_currency, format_timestamp, AlertContext, EvidenceBundle, SourceType};

pub const OUTPUT_CONTRACT: &str = "Return one JSON triage record with fields alert_id, disposition (dismiss, monitor or escalate), \
confidence, typologies, paragraphs, supporting_ids, contradicting_or_missing_ids, unknowns, next_actions and generator_tag. \
Every paragraph must cite at least one evidence ID. Reference only the evidence IDs listed above. \
State amounts, counts and times exactly as they appear in the cited evidence. \
List anything the evidence does not establish under unknowns.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBlock {
    pub source_type: SourceType,
    pub entries: Vec<EvidenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub alert_summary: String,
    /// One block per source type, always all five, in policy, kyc, trigger,
    /// transaction, case order.
    pub evidence_blocks: Vec<EvidenceBlock>,
    pub instructions: String,
    pub feedback: Vec<String>,
}

impl PromptDocument {
    pub fn entry_ids(&self) -> impl Iterator<Item = &str> {
        self.evidence_blocks.iter().flat_map(|b| b.entries.iter().map(|e| e.id.as_str()))
    }

    /// Plain-text rendering with `[id]` prefixed entries.
    pub fn to_text(&self) -> String {
        let mut out = format!("ALERT\n{}\n", self.alert_summary);
        for b in &self.evidence_blocks {
            out.push_str(&format!("\nEVIDENCE: {}\n", b.source_type.as_str()));
            for e in &b.entries {
                out.push_str(&format!("[{}] {}\n", e.id, e.text));
            }
        }
        out.push_str(&format!("\nINSTRUCTIONS\n{}\n", self.instructions));
        out.push_str("\nFEEDBACK\n");
        for f in &self.feedback {
            out.push_str(f);
            out.push('\n');
        }
        out
    }
}

pub fn alert_summary(ctx: &AlertContext) -> String {
    let a = &ctx.alert;
    format!(
        "Alert {} ({}) on account {} of customer {} raised at {} by rules {}; review window {} to {}; {} linked transactions.",
        a.id,
        a.alert_type.as_str(),
        ctx.account_id,
        a.customer_id,
        format_timestamp(a.alert_time),
        a.trigger.rule_ids.join(", "),
        format_timestamp(a.window.0),
        format_timestamp(a.window.1),
        a.transaction_ids.len(),
    )
}

/// Summary used when no bundle is available: it carries the transaction facts
/// directly, without evidence ids.
pub fn transactions_summary(ctx: &AlertContext) -> String {
    let mut s = alert_summary(ctx);
    for t in &ctx.transactions {
        s.push_str(&format!(
            "\n{} {} from {} to {} ({:?})",
            format_timestamp(t.timestamp),
            format_currency(t.amount),
            t.src_account,
            t.dst_account,
            t.channel
        ));
    }
    s
}

pub fn render_prompt(
    ctx: &AlertContext,
    bundle: &EvidenceBundle,
    feedback: &[String],
) -> Result<PromptDocument, GenerationError> {
    if bundle.alert_id != ctx.alert.id {
        return Err(GenerationError::BundleMismatch { bundle: bundle.alert_id.clone(), alert: ctx.alert.id.clone() });
    }
    let evidence_blocks = SourceType::ALL
        .into_iter()
        .map(|ty| {
            let mut entries: Vec<EvidenceEntry> = bundle
                .of_type(ty)
                .map(|e| EvidenceEntry { id: e.id.clone(), text: e.canonical_text.clone() })
                .collect();
            entries.sort_by(|a, b| a.id.cmp(&b.id));
            EvidenceBlock { source_type: ty, entries }
        })
        .collect();
    Ok(PromptDocument {
        alert_summary: alert_summary(ctx),
        evidence_blocks,
        instructions: OUTPUT_CONTRACT.to_string(),
        feedback: feedback.to_vec(),
    })
}
