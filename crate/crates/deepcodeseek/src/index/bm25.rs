//! Okapi BM25 sparse index over the namespace documents.
//!
//! idf uses the +1-inside-log variant, ln(1 + (N - df + 0.5)/(df + 0.5)),
//! which keeps idf non-negative on tiny corpora.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::docs::IndexDocument;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    /// term -> postings of (doc ordinal, term frequency), ordinal-ascending.
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub doc_lengths: Vec<u32>,
    pub avgdl: f64,
    pub k1: f64,
    pub b: f64,
    /// ordinal -> namespace
    pub doc_ids: Vec<String>,
}

/// Build the inverted index. Requires at least one document, k1 > 0 and
/// b in [0, 1].
pub fn build_bm25(documents: &[IndexDocument], k1: f64, b: f64) -> Result<Bm25Index> {
    if documents.is_empty() {
        return Err(Error::EmptyDocuments);
    }
    if k1 <= 0.0 || !(0.0..=1.0).contains(&b) {
        return Err(Error::Validation(format!(
            "invalid bm25 parameters k1={k1} b={b}"
        )));
    }
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(documents.len());
    let mut doc_ids = Vec::with_capacity(documents.len());
    for (ordinal, doc) in documents.iter().enumerate() {
        doc_lengths.push(doc.tokens.len() as u32);
        doc_ids.push(doc.namespace.clone());
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for token in &doc.tokens {
            *tf.entry(token).or_insert(0) += 1;
        }
        for (term, freq) in tf {
            postings
                .entry(term.to_string())
                .or_default()
                .push((ordinal as u32, freq));
        }
    }
    let avgdl = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64;
    Ok(Bm25Index {
        postings,
        doc_lengths,
        avgdl,
        k1,
        b,
        doc_ids,
    })
}

impl Bm25Index {
    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

/// Score all documents against a tokenized query. Documents scoring zero are
/// omitted; ties are broken by ascending namespace so runs are comparable.
pub fn score_bm25(index: &Bm25Index, query_tokens: &[String]) -> Vec<(String, f64)> {
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for term in query_tokens {
        let Some(postings) = index.postings.get(term) else {
            continue;
        };
        let idf = index.idf(postings.len());
        for &(ordinal, tf) in postings {
            let tf = tf as f64;
            let dl = index.doc_lengths[ordinal as usize] as f64;
            let denom = tf + index.k1 * (1.0 - index.b + index.b * dl / index.avgdl);
            let contribution = idf * tf * (index.k1 + 1.0) / denom;
            *scores.entry(ordinal).or_insert(0.0) += contribution;
        }
    }
    let mut ranked: Vec<(String, f64)> = scores
        .into_iter()
        .filter(|&(_, score)| score > 0.0)
        .map(|(ordinal, score)| (index.doc_ids[ordinal as usize].clone(), score))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize;

    fn doc(ns: &str, text: &str) -> IndexDocument {
        let tokens = tokenize(text);
        IndexDocument {
            namespace: ns.into(),
            text: text.into(),
            token_count: tokens.len(),
            tokens,
        }
    }

    #[test]
    fn single_doc_postings_and_avgdl() {
        let index = build_bm25(&[doc("D0", "a a b")], DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(index.postings["a"], vec![(0, 2)]);
        assert_eq!(index.postings["b"], vec![(0, 1)]);
        assert_eq!(index.avgdl, 3.0);
        assert_eq!(index.k1, 1.2);
        assert_eq!(index.b, 0.75);
    }

    #[test]
    fn absent_term_empty_result() {
        let index = build_bm25(&[doc("D0", "alpha beta")], DEFAULT_K1, DEFAULT_B).unwrap();
        assert!(score_bm25(&index, &tokenize("gamma")).is_empty());
        assert!(score_bm25(&index, &[]).is_empty());
    }

    #[test]
    fn unique_term_ranks_its_doc_first() {
        let index = build_bm25(
            &[doc("A", "alpha shared"), doc("B", "beta shared")],
            DEFAULT_K1,
            DEFAULT_B,
        )
        .unwrap();
        let ranked = score_bm25(&index, &tokenize("beta"));
        assert_eq!(ranked[0].0, "B");
        assert_eq!(ranked.len(), 1);
    }

    #[test]
    fn ties_break_lexicographically() {
        let index = build_bm25(
            &[doc("Zeta", "same text"), doc("Alpha", "same text")],
            DEFAULT_K1,
            DEFAULT_B,
        )
        .unwrap();
        let ranked = score_bm25(&index, &tokenize("same"));
        assert_eq!(ranked[0].0, "Alpha");
        assert_eq!(ranked[1].0, "Zeta");
        assert_eq!(ranked[0].1, ranked[1].1);
    }

    #[test]
    fn rejects_empty_and_bad_params() {
        assert!(build_bm25(&[], DEFAULT_K1, DEFAULT_B).is_err());
        assert!(build_bm25(&[doc("A", "x")], 0.0, DEFAULT_B).is_err());
        assert!(build_bm25(&[doc("A", "x")], DEFAULT_K1, 1.5).is_err());
    }

    #[test]
    fn adding_a_doc_preserves_existing_postings() {
        let a = doc("A", "alpha alpha beta");
        let b = doc("B", "gamma");
        let small = build_bm25(std::slice::from_ref(&a), DEFAULT_K1, DEFAULT_B).unwrap();
        let large = build_bm25(&[a, b], DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(small.postings["alpha"], large.postings["alpha"]);
        assert_eq!(small.postings["beta"], large.postings["beta"]);
    }

    // Independent brute-force oracle: evaluates the BM25 formula directly
    // over every document, no inverted index involved.
    fn oracle_scores(
        docs: &[IndexDocument],
        query: &[String],
        k1: f64,
        b: f64,
    ) -> Vec<(String, f64)> {
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(|d| d.tokens.len() as f64).sum::<f64>() / n;
        let mut out = Vec::new();
        for d in docs {
            let mut score = 0.0;
            for term in query {
                let df = docs.iter().filter(|d| d.tokens.iter().any(|t| t == term)).count() as f64;
                if df == 0.0 {
                    continue;
                }
                let tf = d.tokens.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let dl = d.tokens.len() as f64;
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            if score > 0.0 {
                out.push((d.namespace.clone(), score));
            }
        }
        out.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        out
    }

    #[test]
    fn matches_brute_force_oracle_on_small_corpus() {
        let docs = vec![
            doc("A", "glide record query user group"),
            doc("B", "array util common elements diff"),
            doc("C", "xml document parse node attribute query"),
        ];
        let index = build_bm25(&docs, DEFAULT_K1, DEFAULT_B).unwrap();
        for query in ["query group", "array common", "parse attribute query util"] {
            let q = tokenize(query);
            let got = score_bm25(&index, &q);
            let want = oracle_scores(&docs, &q, DEFAULT_K1, DEFAULT_B);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.0, w.0);
                assert!((g.1 - w.1).abs() < 1e-9);
            }
        }
    }
}
