//! Editable record drafts. Paragraph text is kept as literal segments and
//! claim slots so a claim value and its rendering never drift apart.

use std::collections::BTreeSet;

use crate::model::{
    format_currency, format_timestamp, AlertType, Claim, ClaimKind, ClaimValue, Comparator, Disposition,
    FieldValue, RationaleParagraph, TriageRecord,
};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Seg {
    Lit(String),
    Claim(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct DraftParagraph {
    pub segs: Vec<Seg>,
    pub citations: Vec<String>,
    pub claims: Vec<Claim>,
}

pub(crate) fn render_claim(claim: &Claim) -> String {
    match (&claim.kind, &claim.value) {
        (ClaimKind::Amount | ClaimKind::ThresholdComparison, ClaimValue::Number(n)) => format_currency(*n),
        (ClaimKind::Timestamp, ClaimValue::Number(n)) => format_timestamp(*n),
        (_, ClaimValue::Number(n)) => n.to_string(),
        (_, ClaimValue::Text(s)) => s.clone(),
    }
}

impl DraftParagraph {
    pub fn lit(&mut self, s: impl Into<String>) -> &mut Self {
        self.segs.push(Seg::Lit(s.into()));
        self
    }

    pub fn cite(&mut self, id: &str) -> &mut Self {
        if !self.citations.iter().any(|c| c == id) {
            self.citations.push(id.to_string());
        }
        self
    }

    /// Inserts a claim copied from `field` of evidence `id` and cites `id`.
    pub fn field(&mut self, id: &str, path: &str, field: &FieldValue) -> &mut Self {
        let (kind, value) = match field {
            FieldValue::Amount(a) => (ClaimKind::Amount, ClaimValue::Number(*a)),
            FieldValue::Timestamp(t) => (ClaimKind::Timestamp, ClaimValue::Number(*t)),
            FieldValue::Count(c) => (ClaimKind::Count, ClaimValue::Number(*c as i64)),
            FieldValue::Counterparty(c) => (ClaimKind::Entity, ClaimValue::Text(c.clone())),
            FieldValue::RiskTier(r) => (ClaimKind::Entity, ClaimValue::Text(r.as_str().to_string())),
        };
        self.push_claim(Claim { kind, value, evidence_id: id.into(), field_path: path.into(), comparator: None })
    }

    /// Asserts `value <cmp> threshold-field` of evidence `id`.
    pub fn threshold(&mut self, value: i64, cmp: Comparator, id: &str, path: &str) -> &mut Self {
        self.push_claim(Claim {
            kind: ClaimKind::ThresholdComparison,
            value: ClaimValue::Number(value),
            evidence_id: id.into(),
            field_path: path.into(),
            comparator: Some(cmp),
        })
    }

    fn push_claim(&mut self, claim: Claim) -> &mut Self {
        self.cite(&claim.evidence_id.clone());
        self.segs.push(Seg::Claim(self.claims.len()));
        self.claims.push(claim);
        self
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for s in &self.segs {
            match s {
                Seg::Lit(l) => out.push_str(l),
                Seg::Claim(i) => out.push_str(&render_claim(&self.claims[*i])),
            }
        }
        out
    }

    pub fn render(&self) -> RationaleParagraph {
        RationaleParagraph { text: self.text(), citations: self.citations.clone(), claims: self.claims.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DraftRecord {
    pub alert_id: String,
    pub disposition: Disposition,
    pub confidence: f64,
    pub typologies: Vec<AlertType>,
    pub paragraphs: Vec<DraftParagraph>,
    pub contradicting: Vec<String>,
    pub unknowns: Vec<String>,
    pub next_actions: Vec<String>,
}

impl DraftRecord {
    /// Supporting ids are every cited id not listed as contradicting.
    pub fn finish(&self, tag: &str) -> TriageRecord {
        let contradicting: BTreeSet<&str> = self.contradicting.iter().map(String::as_str).collect();
        let mut supporting: Vec<String> = Vec::new();
        for p in &self.paragraphs {
            for c in &p.citations {
                if !contradicting.contains(c.as_str()) && !supporting.contains(c) {
                    supporting.push(c.clone());
                }
            }
        }
        TriageRecord {
            alert_id: self.alert_id.clone(),
            disposition: self.disposition,
            confidence: self.confidence,
            typologies: self.typologies.clone(),
            paragraphs: self.paragraphs.iter().map(DraftParagraph::render).collect(),
            supporting_ids: supporting,
            contradicting_or_missing_ids: self.contradicting.clone(),
            unknowns: self.unknowns.clone(),
            next_actions: self.next_actions.clone(),
            generator_tag: tag.to_string(),
        }
    }
}
