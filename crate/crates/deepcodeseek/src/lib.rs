//! Retrieval engine and evaluation harness for predicting which API
//! namespace (Script Include) a partial code snippet is about to call.
//!
//! The pipeline runs in stages: an optional knowledge-graph filter prunes the
//! candidate namespaces, a query strategy turns the partial code into a
//! retrieval query (raw prefix, LLM intent description, or hypothetical
//! completion), a first-stage retriever (BM25 or dense cosine) ranks the
//! grouped per-namespace documents, and an optional yes/no reranker reorders
//! the top candidates. The `eval` module measures top-K accuracy and MRR over
//! completion tasks; `datagen` builds and cleans synthetic training triplets
//! and mines hard negatives for reranker training.
//!
//! All remote services (embedder, LLM, relevance scorer) sit behind traits
//! with deterministic in-process mocks, so every command runs offline and
//! reproducibly.

pub mod config;
pub mod corpus;
pub mod datagen;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod index;
pub mod kg;
pub mod llm;
pub mod pipeline;
pub mod query;
pub mod rerank;
pub mod serve;
pub mod tokenize;

pub use error::{Error, Result};
