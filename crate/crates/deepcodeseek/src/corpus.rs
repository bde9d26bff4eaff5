//! Corpus and task loading: JSONL parsing, validation and summary statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::tokenize;

/// Scope name treated as "global" unless overridden.
pub const DEFAULT_GLOBAL_SCOPE: &str = "global";

/// One method of an API namespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub name: String,
    pub signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsdoc: Option<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// One API namespace: metadata, member methods, raw code and an optional
/// generated JSDoc summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptIncludeRecord {
    pub namespace: String,
    pub scope: String,
    pub package: String,
    #[serde(default)]
    pub methods: Vec<MethodRecord>,
    pub raw_code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsdoc_summary: Option<String>,
    #[serde(skip)]
    pub is_global: bool,
    #[serde(skip)]
    pub raw_token_count: usize,
    #[serde(skip)]
    pub jsdoc_token_count: usize,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ScriptIncludeRecord {
    /// Recompute the derived fields (token counts, global flag).
    pub fn finalize(&mut self, global_scope: &str) {
        self.is_global = self.scope == global_scope;
        self.raw_token_count = tokenize(&self.raw_code).len();
        self.jsdoc_token_count = self
            .jsdoc_summary
            .as_deref()
            .map(|s| tokenize(s).len())
            .unwrap_or(0);
    }

    fn validate(&self, path: &str, line: usize) -> Result<()> {
        if self.namespace.trim().is_empty() {
            return Err(Error::Parse {
                path: path.to_string(),
                line,
                message: "empty namespace".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for m in &self.methods {
            if m.name.trim().is_empty() {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line,
                    message: format!("namespace {:?}: empty method name", self.namespace),
                });
            }
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line,
                    message: format!(
                        "namespace {:?}: duplicate method {:?}",
                        self.namespace, m.name
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Whether the task's developer intent was judged clear, ambiguous, or not
/// judged at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Clear,
    Ambiguous,
    #[default]
    Unjudged,
}

/// One evaluation sample: partial code around a completion span plus the
/// ground-truth namespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionTask {
    pub id: String,
    pub code_before: String,
    pub code_middle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_after: Option<String>,
    pub ground_truth: String,
    #[serde(default)]
    pub intent: Intent,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl CompletionTask {
    /// FIM formatting is only possible when a suffix exists.
    pub fn fim_capable(&self) -> bool {
        self.code_after.is_some()
    }
}

/// min/mean/max over a token-count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

impl TokenStats {
    fn from_counts(counts: &[usize]) -> Self {
        if counts.is_empty() {
            return TokenStats {
                min: 0,
                mean: 0.0,
                max: 0,
            };
        }
        let min = *counts.iter().min().unwrap();
        let max = *counts.iter().max().unwrap();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        TokenStats { min, mean, max }
    }
}

/// Corpus summary: namespace/API counts and token-length distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub namespace_count: usize,
    pub api_count: usize,
    pub raw_tokens: TokenStats,
    pub jsdoc_tokens: TokenStats,
}

/// Load and validate a corpus from JSONL, one record per line.
/// Duplicate namespaces are rejected with both offending line numbers.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ScriptIncludeRecord>> {
    load_corpus_with_scope(path, DEFAULT_GLOBAL_SCOPE)
}

pub fn load_corpus_with_scope(
    path: impl AsRef<Path>,
    global_scope: &str,
) -> Result<Vec<ScriptIncludeRecord>> {
    let path_str = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: ScriptIncludeRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path_str.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
        record.validate(&path_str, line_no)?;
        if let Some(&first) = seen.get(&record.namespace) {
            return Err(Error::DuplicateNamespace {
                namespace: record.namespace,
                first_line: first,
                second_line: line_no,
            });
        }
        seen.insert(record.namespace.clone(), line_no);
        record.finalize(global_scope);
        records.push(record);
    }
    Ok(records)
}

/// Load completion tasks from JSONL. When a corpus is supplied, every
/// ground_truth must resolve to a corpus namespace.
pub fn load_tasks(
    path: impl AsRef<Path>,
    corpus: Option<&[ScriptIncludeRecord]>,
) -> Result<Vec<CompletionTask>> {
    let path_str = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let reader = BufReader::new(file);

    let known: Option<BTreeSet<&str>> =
        corpus.map(|c| c.iter().map(|r| r.namespace.as_str()).collect());

    let mut tasks = Vec::new();
    let mut unresolved = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let task: CompletionTask = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        if task.code_middle.trim().is_empty() {
            return Err(Error::Parse {
                path: path_str.clone(),
                line: line_no,
                message: format!("task {:?}: empty code_middle", task.id),
            });
        }
        if let Some(known) = &known {
            if !known.contains(task.ground_truth.as_str()) {
                unresolved.push(task.id.clone());
            }
        }
        tasks.push(task);
    }
    if !unresolved.is_empty() {
        return Err(Error::UnresolvedGroundTruth {
            task_ids: unresolved,
        });
    }
    Ok(tasks)
}

/// Serialize a corpus back to JSONL, preserving unknown keys.
pub fn save_corpus(records: &[ScriptIncludeRecord], path: impl AsRef<Path>) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("corpus record serializes"));
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(&path_str, e))
}

/// Summary statistics over a corpus; jsdoc stats cover only records that
/// carry a summary.
pub fn corpus_stats(corpus: &[ScriptIncludeRecord]) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let raw: Vec<usize> = corpus.iter().map(|r| r.raw_token_count).collect();
    let jsdoc: Vec<usize> = corpus
        .iter()
        .filter(|r| r.jsdoc_summary.is_some())
        .map(|r| r.jsdoc_token_count)
        .collect();
    Ok(CorpusStats {
        namespace_count: corpus.len(),
        api_count: corpus.iter().map(|r| r.methods.len()).sum(),
        raw_tokens: TokenStats::from_counts(&raw),
        jsdoc_tokens: TokenStats::from_counts(&jsdoc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const REC_A: &str = r#"{"namespace":"ArrayUtil","scope":"global","package":"core","methods":[{"name":"contains","signature":"contains(array, element)"}],"raw_code":"var ArrayUtil = Class.create();","jsdoc_summary":"Array helpers."}"#;
    const REC_B: &str = r#"{"namespace":"Differ","scope":"global","package":"core","methods":[],"raw_code":"var Differ;"}"#;

    #[test]
    fn loads_valid_records() {
        let f = write_lines(&[REC_A, REC_B]);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert!(corpus[0].is_global);
        assert_eq!(corpus[0].raw_token_count, tokenize("var ArrayUtil = Class.create();").len());
    }

    #[test]
    fn rejects_duplicate_namespace_with_lines() {
        let f = write_lines(&[REC_A, REC_B, REC_A]);
        match load_corpus(f.path()) {
            Err(Error::DuplicateNamespace {
                namespace,
                first_line,
                second_line,
            }) => {
                assert_eq!(namespace, "ArrayUtil");
                assert_eq!((first_line, second_line), (1, 3));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_namespace() {
        let f = write_lines(&[r#"{"namespace":"","scope":"global","package":"p","methods":[],"raw_code":"x"}"#]);
        assert!(matches!(load_corpus(f.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let f = write_lines(&[REC_A, "not json"]);
        match load_corpus(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_round_trip() {
        let raw = r#"{"namespace":"X","scope":"global","package":"p","methods":[],"raw_code":"x","custom_key":42}"#;
        let f = write_lines(&[raw]);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus[0].extra["custom_key"], 42);
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&corpus, out.path()).unwrap();
        let again = load_corpus(out.path()).unwrap();
        assert_eq!(corpus, again);
    }

    #[test]
    fn tasks_resolve_against_corpus() {
        let cf = write_lines(&[REC_A]);
        let corpus = load_corpus(cf.path()).unwrap();
        let tf = write_lines(&[
            r#"{"id":"t1","code_before":"var a;","code_middle":"new ArrayUtil()","ground_truth":"ArrayUtil"}"#,
        ]);
        let tasks = load_tasks(tf.path(), Some(&corpus)).unwrap();
        assert_eq!(tasks.len(), 1);
        assert!(!tasks[0].fim_capable());
        assert_eq!(tasks[0].intent, Intent::Unjudged);
    }

    #[test]
    fn unresolved_ground_truth_lists_task_ids() {
        let cf = write_lines(&[REC_A]);
        let corpus = load_corpus(cf.path()).unwrap();
        let tf = write_lines(&[
            r#"{"id":"t1","code_before":"","code_middle":"x","ground_truth":"NoSuchNS"}"#,
        ]);
        match load_tasks(tf.path(), Some(&corpus)) {
            Err(Error::UnresolvedGroundTruth { task_ids }) => assert_eq!(task_ids, vec!["t1"]),
            other => panic!("expected unresolved error, got {other:?}"),
        }
    }

    #[test]
    fn stats_single_record() {
        let mut rec: ScriptIncludeRecord = serde_json::from_str(REC_B).unwrap();
        rec.raw_code = "a b c d e f g h i j".into();
        rec.finalize(DEFAULT_GLOBAL_SCOPE);
        let stats = corpus_stats(&[rec]).unwrap();
        assert_eq!(stats.raw_tokens.min, 10);
        assert_eq!(stats.raw_tokens.max, 10);
        assert_eq!(stats.raw_tokens.mean, 10.0);
    }

    #[test]
    fn stats_mean_of_extremes() {
        let mk = |n: usize| {
            let mut rec: ScriptIncludeRecord = serde_json::from_str(REC_B).unwrap();
            rec.namespace = format!("N{n}");
            rec.raw_code = vec!["t"; n].join(" ");
            rec.finalize(DEFAULT_GLOBAL_SCOPE);
            rec
        };
        let stats = corpus_stats(&[mk(66), mk(10_407)]).unwrap();
        assert_eq!(stats.raw_tokens.min, 66);
        assert_eq!(stats.raw_tokens.max, 10_407);
        assert_eq!(stats.raw_tokens.mean, 5236.5);
    }

    #[test]
    fn stats_permutation_invariant() {
        let f = write_lines(&[REC_A, REC_B]);
        let mut corpus = load_corpus(f.path()).unwrap();
        let a = corpus_stats(&corpus).unwrap();
        corpus.reverse();
        let b = corpus_stats(&corpus).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(matches!(corpus_stats(&[]), Err(Error::EmptyCorpus)));
    }
}
