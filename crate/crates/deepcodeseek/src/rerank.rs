//! Pointwise yes/no reranking of first-stage candidates, plus the listwise
//! scorer contract used by full-permutation backends.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::pipeline::RankedList;

/// Verbatim prompt scaffold for the yes/no reranker.
pub const RERANK_PREFIX: &str = "Judge whether the Document meets the requirements based on the Query and the Instruct provided. Answer \"yes\" or \"no\".";
pub const RERANK_SUFFIX: &str = "<|im_end|>\n<|im_start|>assistant\n<think>\n\n</think>\n\n";
pub const RERANK_INSTRUCTION: &str = "Using the API's JSDoc, decide whether this API is directly useful for the caller-code to complete its intended task.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankPrompt {
    pub prefix: String,
    pub instruction: String,
    pub query: String,
    pub document: String,
    pub suffix: String,
    pub assembled: String,
}

/// Assemble the scoring prompt: prefix, then instruction / query / document
/// (in that order, under labels), then the think-block suffix.
pub fn build_rerank_prompt(query: &str, document: &str) -> RerankPrompt {
    let body = format!(
        "<Instruct>: {RERANK_INSTRUCTION}\n<Query>: {query}\n<Document>: {document}"
    );
    let assembled = format!("{RERANK_PREFIX}\n{body}\n{RERANK_SUFFIX}");
    RerankPrompt {
        prefix: RERANK_PREFIX.to_string(),
        instruction: RERANK_INSTRUCTION.to_string(),
        query: query.to_string(),
        document: document.to_string(),
        suffix: RERANK_SUFFIX.to_string(),
        assembled,
    }
}

/// Pointwise relevance scorer: probability in [0, 1] that the first decision
/// token is "yes".
pub trait Scorer: Send + Sync {
    fn score(&self, query: &str, document: &str) -> Result<f64>;
    fn tag(&self) -> &str;
}

/// Listwise alternative: returns a permutation of document indices, most
/// relevant first.
pub trait ListwiseReranker: Send + Sync {
    fn rerank_listwise(&self, query: &str, documents: &[String]) -> Result<Vec<usize>>;
    fn tag(&self) -> &str;
}

/// Test/e2e scorer: 1.0 for the configured target namespace, 0.0 otherwise.
/// The document text must carry the namespace on its first line (the grouped
/// document layout guarantees that).
pub struct OracleScorer {
    pub target: String,
}

impl Scorer for OracleScorer {
    fn score(&self, _query: &str, document: &str) -> Result<f64> {
        let first_line = document.lines().next().unwrap_or("").trim();
        Ok(if first_line == self.target { 1.0 } else { 0.0 })
    }
    fn tag(&self) -> &str {
        "oracle"
    }
}

/// Constant scorer; with all scores tied, reranking preserves input order.
pub struct ConstScorer(pub f64);

impl Scorer for ConstScorer {
    fn score(&self, _query: &str, _document: &str) -> Result<f64> {
        Ok(self.0)
    }
    fn tag(&self) -> &str {
        "const"
    }
}

/// What a scorer backend produced for one candidate.
pub enum ScorerOutput {
    Text(String),
    /// Per-token log-probabilities of the first decision token.
    LogProbs(std::collections::BTreeMap<String, f64>),
}

/// Result of reading the first decision token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstTokenScore {
    pub score: f64,
    pub parse_failure: bool,
}

/// Score from the first decision token. With log-probabilities available,
/// score = P(yes) / (P(yes) + P(no)) over the case-folded decision tokens;
/// with text only, 1.0 / 0.0 by prefix match. Neither "yes" nor "no" scores
/// 0.0 with the parse-failure flag set.
pub fn first_token_score(output: &ScorerOutput) -> FirstTokenScore {
    match output {
        ScorerOutput::Text(text) => {
            let first = text
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_lowercase();
            if first.starts_with("yes") {
                FirstTokenScore {
                    score: 1.0,
                    parse_failure: false,
                }
            } else if first.starts_with("no") {
                FirstTokenScore {
                    score: 0.0,
                    parse_failure: false,
                }
            } else {
                FirstTokenScore {
                    score: 0.0,
                    parse_failure: true,
                }
            }
        }
        ScorerOutput::LogProbs(logprobs) => {
            let mass = |target: &str| -> f64 {
                logprobs
                    .iter()
                    .filter(|(token, _)| token.trim().to_lowercase().starts_with(target))
                    .map(|(_, lp)| lp.exp())
                    .sum()
            };
            let yes = mass("yes");
            let no = mass("no");
            if yes + no > 0.0 {
                FirstTokenScore {
                    score: yes / (yes + no),
                    parse_failure: false,
                }
            } else {
                FirstTokenScore {
                    score: 0.0,
                    parse_failure: true,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedCandidate {
    pub namespace: String,
    /// Scorer probability; None when the scorer call failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub original_rank: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedList {
    pub task_id: String,
    pub candidates: Vec<RerankedCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_rank: Option<usize>,
    pub depth: usize,
}

/// Rescore the top `depth` candidates and sort them by score descending,
/// ties broken by original rank; candidates beyond `depth` keep their
/// relative order after the rescored block. Scorer failures rank last among
/// the rescored block.
pub fn rerank(
    list: &RankedList,
    documents: &dyn Fn(&str) -> Option<String>,
    scorer: &dyn Scorer,
    depth: usize,
    ground_truth: Option<&str>,
    query_text: &str,
) -> RerankedList {
    let depth = depth.min(list.candidates.len());
    let mut rescored: Vec<RerankedCandidate> = list.candidates[..depth]
        .iter()
        .map(|c| {
            let score = match documents(&c.namespace) {
                Some(doc) => match scorer.score(query_text, &doc) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        tracing::warn!(namespace = %c.namespace, error = %e, "scorer failed");
                        None
                    }
                },
                None => {
                    tracing::warn!(namespace = %c.namespace, "no document for candidate");
                    None
                }
            };
            RerankedCandidate {
                namespace: c.namespace.clone(),
                score,
                original_rank: c.rank,
                rank: 0,
            }
        })
        .collect();
    rescored.sort_by(|a, b| {
        let sa = a.score.unwrap_or(f64::NEG_INFINITY);
        let sb = b.score.unwrap_or(f64::NEG_INFINITY);
        sb.partial_cmp(&sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.original_rank.cmp(&b.original_rank))
    });

    let mut candidates = rescored;
    candidates.extend(list.candidates[depth..].iter().map(|c| RerankedCandidate {
        namespace: c.namespace.clone(),
        score: None,
        original_rank: c.rank,
        rank: 0,
    }));
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rank = i + 1;
    }

    let gt = ground_truth.unwrap_or("");
    let ground_truth_rank = if gt.is_empty() {
        None
    } else {
        candidates.iter().find(|c| c.namespace == gt).map(|c| c.rank)
    };

    RerankedList {
        task_id: list.task_id.clone(),
        candidates,
        ground_truth_rank,
        depth,
    }
}

#[derive(Deserialize)]
struct ScoreResponse {
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    logprobs: Option<std::collections::BTreeMap<String, f64>>,
}

/// HTTP scorer client: `{"query", "document"}` in, `{"score"}` or
/// `{"text", "logprobs"?}` out.
pub struct HttpScorer {
    endpoint: String,
    tag: String,
    client: reqwest::blocking::Client,
    auth_token: Option<String>,
}

impl HttpScorer {
    pub fn new(
        endpoint: impl Into<String>,
        auth_env_var: Option<&str>,
        timeout: std::time::Duration,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::transport("scorer", e.to_string()))?;
        let auth_token = auth_env_var.and_then(|var| std::env::var(var).ok());
        Ok(HttpScorer {
            tag: format!("http:{endpoint}"),
            endpoint,
            client,
            auth_token,
        })
    }
}

impl Scorer for HttpScorer {
    fn score(&self, query: &str, document: &str) -> Result<f64> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&json!({"query": query, "document": document}));
        if let Some(token) = &self.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::transport("scorer", e.to_string()))?;
        let parsed: ScoreResponse = resp
            .json()
            .map_err(|e| Error::transport("scorer", e.to_string()))?;
        if let Some(score) = parsed.score {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::transport(
                    "scorer",
                    format!("score {score} outside [0,1]"),
                ));
            }
            return Ok(score);
        }
        let output = match (parsed.logprobs, parsed.text) {
            (Some(lp), _) => ScorerOutput::LogProbs(lp),
            (None, Some(text)) => ScorerOutput::Text(text),
            (None, None) => {
                return Err(Error::transport("scorer", "response had no score or text"))
            }
        };
        Ok(first_token_score(&output).score)
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}

#[derive(Deserialize)]
struct ListwiseResponse {
    order: Vec<usize>,
}

/// HTTP listwise reranker: `{"query", "documents"}` -> `{"order": [indices]}`.
pub struct HttpListwiseReranker {
    endpoint: String,
    tag: String,
    client: reqwest::blocking::Client,
    auth_token: Option<String>,
}

impl HttpListwiseReranker {
    pub fn new(
        endpoint: impl Into<String>,
        auth_env_var: Option<&str>,
        timeout: std::time::Duration,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::transport("listwise-reranker", e.to_string()))?;
        let auth_token = auth_env_var.and_then(|var| std::env::var(var).ok());
        Ok(HttpListwiseReranker {
            tag: format!("http:{endpoint}"),
            endpoint,
            client,
            auth_token,
        })
    }
}

impl ListwiseReranker for HttpListwiseReranker {
    fn rerank_listwise(&self, query: &str, documents: &[String]) -> Result<Vec<usize>> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&json!({"query": query, "documents": documents}));
        if let Some(token) = &self.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::transport("listwise-reranker", e.to_string()))?;
        let parsed: ListwiseResponse = resp
            .json()
            .map_err(|e| Error::transport("listwise-reranker", e.to_string()))?;
        let mut seen = vec![false; documents.len()];
        for &i in &parsed.order {
            if i >= documents.len() || seen[i] {
                return Err(Error::transport(
                    "listwise-reranker",
                    "order is not a permutation of document indices",
                ));
            }
            seen[i] = true;
        }
        if parsed.order.len() != documents.len() {
            return Err(Error::transport(
                "listwise-reranker",
                "order length mismatch",
            ));
        }
        Ok(parsed.order)
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Candidate, FirstStage};
    use crate::query::Strategy;

    fn ranked(namespaces: &[&str]) -> RankedList {
        RankedList {
            task_id: "t1".into(),
            strategy: Strategy::Prefix,
            fim: false,
            candidates: namespaces
                .iter()
                .enumerate()
                .map(|(i, ns)| Candidate {
                    namespace: ns.to_string(),
                    score: 1.0 - i as f64 * 0.01,
                    rank: i + 1,
                    stage: FirstStage::Dense,
                })
                .collect(),
            ground_truth_rank: None,
            stage_latencies_ms: Default::default(),
        }
    }

    fn doc_lookup(ns: &str) -> Option<String> {
        Some(format!("{ns}\nsummary text"))
    }

    #[test]
    fn prompt_contains_verbatim_scaffold() {
        let p = build_rerank_prompt("the query", "the document");
        assert!(p.assembled.contains("Answer \"yes\" or \"no\""));
        assert!(p.assembled.ends_with(RERANK_SUFFIX));
        assert!(p.assembled.contains("<think>\n\n</think>"));
        let instr = p.assembled.find("<Instruct>").unwrap();
        let query = p.assembled.find("<Query>").unwrap();
        let doc = p.assembled.find("<Document>").unwrap();
        assert!(instr < query && query < doc);
    }

    #[test]
    fn oracle_moves_ground_truth_to_top() {
        let names: Vec<String> = (0..40).map(|i| format!("Ns{i:02}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let list = ranked(&refs);
        let scorer = OracleScorer {
            target: "Ns36".into(), // original rank 37
        };
        let out = rerank(&list, &doc_lookup, &scorer, 40, Some("Ns36"), "q");
        assert_eq!(out.ground_truth_rank, Some(1));
        assert_eq!(out.candidates[0].namespace, "Ns36");
        assert_eq!(out.candidates[0].original_rank, 37);
    }

    #[test]
    fn constant_scores_preserve_order() {
        let list = ranked(&["A", "B", "C"]);
        let out = rerank(&list, &doc_lookup, &ConstScorer(0.5), 3, None, "q");
        let order: Vec<&str> = out.candidates.iter().map(|c| c.namespace.as_str()).collect();
        assert_eq!(order, vec!["A", "B", "C"]);
    }

    #[test]
    fn tail_beyond_depth_untouched() {
        let names: Vec<String> = (0..40).map(|i| format!("Ns{i:02}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let list = ranked(&refs);
        let scorer = OracleScorer {
            target: "Ns10".into(),
        };
        let out = rerank(&list, &doc_lookup, &scorer, 20, Some("Ns10"), "q");
        for (i, c) in out.candidates[20..].iter().enumerate() {
            assert_eq!(c.namespace, format!("Ns{:02}", 20 + i));
            assert_eq!(c.rank, 21 + i);
        }
    }

    #[test]
    fn output_is_permutation_of_input() {
        let list = ranked(&["C", "A", "B"]);
        let out = rerank(&list, &doc_lookup, &OracleScorer { target: "B".into() }, 3, None, "q");
        let mut got: Vec<&str> = out.candidates.iter().map(|c| c.namespace.as_str()).collect();
        got.sort();
        assert_eq!(got, vec!["A", "B", "C"]);
        let ranks: Vec<usize> = out.candidates.iter().map(|c| c.rank).collect();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    struct FailingScorer;
    impl Scorer for FailingScorer {
        fn score(&self, _q: &str, document: &str) -> Result<f64> {
            if document.starts_with("B\n") {
                Err(Error::transport("test", "down"))
            } else {
                Ok(0.7)
            }
        }
        fn tag(&self) -> &str {
            "failing"
        }
    }

    #[test]
    fn scorer_failures_rank_last_among_rescored() {
        let list = ranked(&["A", "B", "C"]);
        let out = rerank(&list, &doc_lookup, &FailingScorer, 3, None, "q");
        assert_eq!(out.candidates[2].namespace, "B");
        assert_eq!(out.candidates[2].score, None);
    }

    #[test]
    fn first_token_text_cases() {
        let yes = first_token_score(&ScorerOutput::Text("Yes, because it fits".into()));
        assert_eq!(yes.score, 1.0);
        assert!(!yes.parse_failure);
        let no = first_token_score(&ScorerOutput::Text("no".into()));
        assert_eq!(no.score, 0.0);
        assert!(!no.parse_failure);
        let other = first_token_score(&ScorerOutput::Text("maybe?".into()));
        assert_eq!(other.score, 0.0);
        assert!(other.parse_failure);
    }

    #[test]
    fn first_token_logprob_normalization() {
        let mut lp = std::collections::BTreeMap::new();
        lp.insert("yes".to_string(), 0.9f64.ln());
        lp.insert("no".to_string(), 0.1f64.ln());
        let out = first_token_score(&ScorerOutput::LogProbs(lp));
        assert!((out.score - 0.9).abs() < 1e-12);
        assert!(!out.parse_failure);
    }
}
