//! Dense vector index: exact brute-force cosine scan. At a few hundred
//! documents exactness beats sublinear search, and results stay reproducible.

use serde::{Deserialize, Serialize};

use crate::embed::{l2_normalize, Embedder};
use crate::error::{Error, Result};
use crate::index::docs::IndexDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    pub dim: usize,
    /// Unit-normalized row per document, ordinal order.
    pub vectors: Vec<Vec<f32>>,
    /// ordinal -> namespace
    pub doc_ids: Vec<String>,
    pub embedder_tag: String,
}

/// Embed all documents in batches and assemble the index. Vectors are
/// re-normalized after receipt; a wrong-length vector aborts the build.
pub fn build_dense(
    documents: &[IndexDocument],
    embedder: &dyn Embedder,
    instruction: Option<&str>,
    batch_size: usize,
) -> Result<DenseIndex> {
    if documents.is_empty() {
        return Err(Error::EmptyDocuments);
    }
    if batch_size == 0 {
        return Err(Error::Validation("batch_size must be >= 1".into()));
    }
    let dim = embedder.dim();
    let mut vectors = Vec::with_capacity(documents.len());
    for chunk in documents.chunks(batch_size) {
        let texts: Vec<String> = chunk.iter().map(|d| d.text.clone()).collect();
        let batch = embedder.embed(&texts, instruction)?;
        if batch.len() != texts.len() {
            return Err(Error::transport(
                "embedder",
                format!("expected {} vectors, got {}", texts.len(), batch.len()),
            ));
        }
        for mut v in batch {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            l2_normalize(&mut v);
            vectors.push(v);
        }
    }
    Ok(DenseIndex {
        dim,
        vectors,
        doc_ids: documents.iter().map(|d| d.namespace.clone()).collect(),
        embedder_tag: embedder.tag().to_string(),
    })
}

/// Cosine similarity of the (unit) query against every document, sorted
/// descending; ties broken by ascending namespace.
pub fn score_dense(index: &DenseIndex, query_vector: &[f32]) -> Result<Vec<(String, f64)>> {
    if query_vector.len() != index.dim {
        return Err(Error::DimensionMismatch {
            expected: index.dim,
            got: query_vector.len(),
        });
    }
    let mut ranked: Vec<(String, f64)> = index
        .vectors
        .iter()
        .zip(&index.doc_ids)
        .map(|(v, ns)| {
            let dot: f32 = v.iter().zip(query_vector).map(|(a, b)| a * b).sum();
            (ns.clone(), dot as f64)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}
