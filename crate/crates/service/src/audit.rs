//! Append-only, hash-chained audit log stored as JSON lines.
//!
//! Each line is the canonical JSON of one [`AuditEvent`]. `payload_hash` is
//! the SHA-256 of the payload's canonical bytes, `hash` covers every other
//! field of the event, and `prev_hash` repeats the previous event's `hash`.
//! Removing events from the end leaves a valid chain; detecting that needs
//! an external checkpoint of the last hash.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;
use triage_core::canonical::{to_canonical_bytes, value_to_canonical, CanonicalError};

/// `prev_hash` of the first event.
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BundleBuilt,
    GenerationAttempt,
    VerificationReport,
    CounterfactualValidated,
    DispositionSet,
    OverrideSet,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::BundleBuilt => "bundle_built",
            EventKind::GenerationAttempt => "generation_attempt",
            EventKind::VerificationReport => "verification_report",
            EventKind::CounterfactualValidated => "counterfactual_validated",
            EventKind::DispositionSet => "disposition_set",
            EventKind::OverrideSet => "override_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    /// Starts at 1 and increases by one per event.
    pub seq: u64,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub kind: EventKind,
    pub alert_id: String,
    pub principal: String,
    pub payload: Value,
    pub payload_hash: String,
    pub prev_hash: String,
    pub hash: String,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("audit log does not verify: first broken event at seq {0}")]
    Broken(u64),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AuditError + '_ {
    move |source| AuditError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The digest stored in `hash`: canonical bytes of the event without it.
pub fn event_hash(e: &AuditEvent) -> String {
    let mut v = serde_json::to_value(e).expect("audit event serializes");
    if let Value::Object(m) = &mut v {
        m.remove("hash");
    }
    sha256_hex(&value_to_canonical(&v))
}

pub fn event_line(e: &AuditEvent) -> Vec<u8> {
    let mut line = to_canonical_bytes(e).expect("audit event serializes");
    line.push(b'\n');
    line
}

/// Source of event timestamps.
pub type Clock = Arc<dyn Fn() -> String + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true))
}

/// Result of checking a whole log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub ok: bool,
    /// Position-derived seq of the first event that fails, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub broken_at: Option<u64>,
    /// Events that verified before the break.
    pub events: u64,
}

/// Checks raw log bytes. A line fails when it is not the canonical form of
/// an event, carries the wrong seq, payload hash, chain link or own hash.
pub fn verify_chain_bytes(bytes: &[u8]) -> ChainCheck {
    let mut prev = GENESIS_HASH.to_string();
    let mut n = 0u64;
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return ChainCheck { ok: bytes.is_empty(), broken_at: (!bytes.is_empty()).then_some(1), events: 0 };
    }
    for line in body.split(|b| *b == b'\n') {
        let seq = n + 1;
        let ok = serde_json::from_slice::<AuditEvent>(line).ok().is_some_and(|e| {
            e.seq == seq
                && e.prev_hash == prev
                && e.payload_hash == sha256_hex(&value_to_canonical(&e.payload))
                && e.hash == event_hash(&e)
                && event_line(&e).strip_suffix(b"\n") == Some(line)
                && {
                    prev = e.hash.clone();
                    true
                }
        });
        if !ok {
            return ChainCheck { ok: false, broken_at: Some(seq), events: n };
        }
        n = seq;
    }
    // the log always ends in a newline; a missing one means a torn write
    if !bytes.ends_with(b"\n") {
        return ChainCheck { ok: false, broken_at: Some(n), events: n - 1 };
    }
    ChainCheck { ok: true, broken_at: None, events: n }
}

pub fn verify_chain_file(path: &Path) -> Result<ChainCheck, AuditError> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    Ok(verify_chain_bytes(&bytes))
}

/// Parses a log that is known to verify.
pub fn read_events(path: &Path) -> Result<Vec<AuditEvent>, AuditError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(io(path)(e)),
    };
    let check = verify_chain_bytes(&bytes);
    if let Some(seq) = check.broken_at {
        return Err(AuditError::Broken(seq));
    }
    Ok(bytes
        .split(|b| *b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).expect("verified line parses"))
        .collect())
}

struct Writer {
    out: BufWriter<File>,
    next_seq: u64,
    last_hash: String,
    events: Vec<AuditEvent>,
}

/// The single writer. Appends are serialized and flushed before returning.
pub struct AuditLog {
    path: PathBuf,
    clock: Clock,
    inner: Mutex<Writer>,
}

/// What a caller supplies for one event.
#[derive(Debug, Clone)]
pub struct NewEvent<'a> {
    pub kind: EventKind,
    pub alert_id: &'a str,
    pub principal: &'a str,
    pub payload: Value,
}

impl AuditLog {
    /// Opens or creates the log, refusing one whose chain is broken.
    pub fn open(path: &Path, clock: Clock) -> Result<Self, AuditError> {
        let events = read_events(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io(path))?;
        let writer = Writer {
            out: BufWriter::new(file),
            next_seq: events.last().map_or(1, |e| e.seq + 1),
            last_hash: events.last().map_or_else(|| GENESIS_HASH.to_string(), |e| e.hash.clone()),
            events,
        };
        Ok(Self { path: path.to_path_buf(), clock, inner: Mutex::new(writer) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, e: NewEvent<'_>) -> Result<AuditEvent, AuditError> {
        self.append_all(std::slice::from_ref(&e)).map(|mut v| v.remove(0))
    }

    /// Appends consecutive events under one lock, so no other writer's
    /// events land between them.
    pub fn append_all(&self, batch: &[NewEvent<'_>]) -> Result<Vec<AuditEvent>, AuditError> {
        let mut w = self.inner.lock().expect("audit lock");
        let mut out = Vec::with_capacity(batch.len());
        let mut bytes = Vec::new();
        let (mut seq, mut prev) = (w.next_seq, w.last_hash.clone());
        for e in batch {
            let payload_bytes = value_to_canonical(&e.payload);
            let mut ev = AuditEvent {
                seq,
                timestamp: (self.clock)(),
                kind: e.kind,
                alert_id: e.alert_id.to_string(),
                principal: e.principal.to_string(),
                payload: serde_json::from_slice(&payload_bytes).expect("canonical bytes parse"),
                payload_hash: sha256_hex(&payload_bytes),
                prev_hash: prev,
                hash: String::new(),
            };
            ev.hash = event_hash(&ev);
            prev = ev.hash.clone();
            seq += 1;
            bytes.extend(event_line(&ev));
            out.push(ev);
        }
        w.out.write_all(&bytes).and_then(|_| w.out.flush()).map_err(io(&self.path))?;
        w.next_seq = seq;
        w.last_hash = prev;
        w.events.extend(out.iter().cloned());
        Ok(out)
    }

    /// Events with `seq >= from_seq`, at most `limit`.
    pub fn events_from(&self, from_seq: u64, limit: usize) -> Vec<AuditEvent> {
        let w = self.inner.lock().expect("audit lock");
        let start = from_seq.saturating_sub(1) as usize;
        w.events.iter().skip(start).take(limit).cloned().collect()
    }

    pub fn events_for(&self, alert_id: &str) -> Vec<AuditEvent> {
        let w = self.inner.lock().expect("audit lock");
        w.events.iter().filter(|e| e.alert_id == alert_id).cloned().collect()
    }

    pub fn snapshot(&self) -> Vec<AuditEvent> {
        self.inner.lock().expect("audit lock").events.clone()
    }

    pub fn last_seq(&self) -> u64 {
        self.inner.lock().expect("audit lock").next_seq - 1
    }
}
