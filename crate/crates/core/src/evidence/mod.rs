//! Evidence store: indexing and permission-aware bundle retrieval.

mod index;
mod retrieval;

pub use index::{jaccard, token_set, tokenize, EvidenceIndex, IndexError, IndexFile, INDEX_FORMAT_VERSION};
pub use retrieval::{
    bm25, default_quota, filter_flags, rank_semantic, retrieve, select_bundle, structured_filter, AclContext,
    FilterStats, HardFilters, RetrievalQuery, BM25_B, BM25_K1, DEDUP_JACCARD, DEFAULT_K_TOTAL,
};
