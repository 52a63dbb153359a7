//! Triage service: the pipeline behind an HTTP+JSON API and the `amltriage`
//! command line, with a hash-chained audit trail of every stage and every
//! human override.

pub mod api;
pub mod audit;
pub mod cli;
pub mod config;
pub mod service;
pub mod state;

pub use audit::{verify_chain_bytes, verify_chain_file, AuditEvent, AuditLog, ChainCheck, EventKind};
pub use config::ServiceConfig;
pub use service::{DataDir, ServiceError, TriageService};
