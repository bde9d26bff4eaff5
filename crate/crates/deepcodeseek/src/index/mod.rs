//! Index construction: namespace-grouped documents, BM25 postings, dense
//! vectors, and on-disk persistence.

mod bm25;
mod dense;
mod docs;
mod store;

pub use bm25::{build_bm25, score_bm25, Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use dense::{build_dense, score_dense, DenseIndex};
pub use docs::{build_documents, DocumentSource, IndexDocument};
pub use store::{load_index, save_index, IndexBundle, INDEX_FORMAT_VERSION};
