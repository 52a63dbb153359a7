//! Inverted index over canonical evidence text.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EvidenceItem, SourceType};

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("duplicate evidence id {id} at positions {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("index file format {found} is not supported (expected {expected})")]
    Format { found: u32, expected: u32 },
    #[error("index file is inconsistent: {0}")]
    Inconsistent(String),
    #[error("index file is not valid JSON: {0}")]
    Json(String),
}

/// Lowercase, split on anything that is not alphanumeric, drop tokens
/// shorter than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Immutable after construction. Items are stored in id order, so item
/// positions double as a sorted posting order.
#[derive(Debug, Clone)]
pub struct EvidenceIndex {
    items: Vec<EvidenceItem>,
    positions: HashMap<String, usize>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<u32>,
    avg_len: f64,
    superseded_by: HashMap<String, Vec<usize>>,
    by_customer: HashMap<String, Vec<usize>>,
    by_alert: HashMap<String, Vec<usize>>,
}

impl EvidenceIndex {
    pub fn build(corpus: Vec<EvidenceItem>) -> Result<Self, IndexError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, item) in corpus.iter().enumerate() {
            if let Some(first) = seen.insert(item.id.as_str(), i) {
                return Err(IndexError::DuplicateId { id: item.id.clone(), first, second: i });
            }
        }
        let mut items = corpus;
        items.sort_by(|a, b| a.id.cmp(&b.id));

        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(items.len());
        let mut superseded_by: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_customer: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_alert: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, item) in items.iter().enumerate() {
            let tokens = tokenize(&item.canonical_text);
            doc_len.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
            if let Some(old) = &item.supersedes {
                superseded_by.entry(old.clone()).or_default().push(i);
            }
            if let Some(c) = &item.scope.customer_id {
                by_customer.entry(c.clone()).or_default().push(i);
            }
            if let Some(a) = &item.scope.alert_id {
                by_alert.entry(a.clone()).or_default().push(i);
            }
        }
        let total: u64 = doc_len.iter().map(|n| u64::from(*n)).sum();
        let avg_len = if items.is_empty() { 0.0 } else { total as f64 / items.len() as f64 };
        let positions = items.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        Ok(Self { items, positions, postings, doc_len, avg_len, superseded_by, by_customer, by_alert })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[EvidenceItem] {
        &self.items
    }

    pub fn item(&self, pos: usize) -> &EvidenceItem {
        &self.items[pos]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&EvidenceItem> {
        self.position(id).map(|p| &self.items[p])
    }

    pub fn postings(&self, token: &str) -> &[(usize, u32)] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.postings(token).len()
    }

    pub fn doc_len(&self, pos: usize) -> u32 {
        self.doc_len[pos]
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_len
    }

    /// Items whose `supersedes` names `id`.
    pub fn superseded_by(&self, id: &str) -> impl Iterator<Item = &EvidenceItem> {
        self.superseded_by.get(id).into_iter().flatten().map(|p| &self.items[*p])
    }

    pub fn for_customer(&self, customer_id: &str) -> impl Iterator<Item = usize> + '_ {
        self.by_customer.get(customer_id).into_iter().flatten().copied()
    }

    pub fn for_alert(&self, alert_id: &str) -> impl Iterator<Item = usize> + '_ {
        self.by_alert.get(alert_id).into_iter().flatten().copied()
    }

    pub fn of_type(&self, ty: SourceType) -> impl Iterator<Item = &EvidenceItem> {
        self.items.iter().filter(move |e| e.source_type == ty)
    }

    /// Recomputes the statistics from the items and compares.
    pub fn check_consistency(&self) -> Result<(), IndexError> {
        let fresh = Self::build(self.items.clone())?;
        if fresh.doc_len != self.doc_len || (fresh.avg_len - self.avg_len).abs() > 1e-12 {
            return Err(IndexError::Inconsistent("document lengths differ".into()));
        }
        if fresh.postings != self.postings {
            return Err(IndexError::Inconsistent("postings differ".into()));
        }
        for list in self.postings.values() {
            if list.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(IndexError::Inconsistent("posting list out of order".into()));
            }
        }
        Ok(())
    }
}

pub const INDEX_FORMAT_VERSION: u32 = 1;

/// On-disk form: the items plus enough statistics to detect a mismatched
/// rebuild. Token structures are recomputed on load.
#[derive(Debug, Serialize, Deserialize)]
pub struct IndexFile {
    pub format_version: u32,
    pub document_count: usize,
    pub total_tokens: u64,
    pub items: Vec<EvidenceItem>,
}

impl EvidenceIndex {
    pub fn to_file(&self) -> IndexFile {
        IndexFile {
            format_version: INDEX_FORMAT_VERSION,
            document_count: self.items.len(),
            total_tokens: self.doc_len.iter().map(|n| u64::from(*n)).sum(),
            items: self.items.clone(),
        }
    }

    pub fn from_file(file: IndexFile) -> Result<Self, IndexError> {
        if file.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::Format { found: file.format_version, expected: INDEX_FORMAT_VERSION });
        }
        let (count, tokens) = (file.document_count, file.total_tokens);
        let index = Self::build(file.items)?;
        let rebuilt: u64 = index.doc_len.iter().map(|n| u64::from(*n)).sum();
        if index.len() != count || rebuilt != tokens {
            return Err(IndexError::Inconsistent(format!(
                "header says {count} documents / {tokens} tokens, rebuilt {} / {rebuilt}",
                index.len()
            )));
        }
        Ok(index)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("index serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IndexError> {
        let file: IndexFile = serde_json::from_str(text).map_err(|e| IndexError::Json(e.to_string()))?;
        Self::from_file(file)
    }
}
