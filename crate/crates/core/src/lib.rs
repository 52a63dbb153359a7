//! Evidence-constrained AML alert triage.
//!
//! The crate covers the full offline pipeline: a deterministic transaction
//! simulator with embedded laundering typologies, permission-aware evidence
//! retrieval, contract-constrained triage generation, verification and
//! repair, counterfactual faithfulness checks, and the evaluation metrics.

pub mod canonical;
pub mod evidence;
pub mod indicators;
pub mod model;
pub mod rng;
pub mod schema;
pub mod simgen;
pub mod testutil;
pub mod text;
pub mod validator;
pub mod generate;
pub mod verify;
pub mod counterfactual;
pub mod pipeline;
pub mod eval;

pub use canonical::{canonical_serialize, parse_record, to_canonical_bytes, CanonicalError};
pub use model::*;
pub use schema::{validate_record, SchemaCode, SchemaViolation};
