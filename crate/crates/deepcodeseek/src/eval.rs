//! Metrics (top-K accuracy, MRR@K), latency summaries, the LLM intent judge
//! and report rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{CompletionTask, Intent, ScriptIncludeRecord};
use crate::error::{Error, Result};
use crate::llm::LlmClient;
use crate::query::Strategy;

/// Verbatim system prompt for the intent judge.
pub const JUDGE_SYSTEM_PROMPT: &str = "Role  : ServiceNow code-completion judge\nInput : (a) partial ServiceNow JavaScript Glide code, (b) proposed Script Include namespace, (c) all the possible method descriptions for the given namespace\nTask  : Decide whether the namespace is the natural, intended fit for completing the partial code snippet.\nReply : Output only \"Yes.\" if it fits, otherwise \"No.\" (no extra text).";

/// One evaluated task: where the ground truth landed and how long each stage
/// took. Missing rank means the ground truth was absent from the candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_rank: Option<usize>,
    #[serde(default)]
    pub stage_latencies_ms: BTreeMap<String, f64>,
    pub strategy: Strategy,
    pub reranked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub overall: LatencyStats,
    pub per_stage: BTreeMap<String, LatencyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// K -> percentage in [0, 100].
    pub topk_accuracy: BTreeMap<usize, f64>,
    /// K -> MRR in [0, 1].
    pub mrr_at_k: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<LatencySummary>,
}

/// Percentage of outcomes whose ground truth ranked within K, per K.
pub fn topk_accuracy(outcomes: &[RetrievalOutcome], ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if outcomes.is_empty() {
        return Err(Error::Validation("empty outcome set".into()));
    }
    if ks.is_empty() || ks.iter().any(|&k| k == 0) {
        return Err(Error::Validation("ks must be non-empty, each >= 1".into()));
    }
    let mut out = BTreeMap::new();
    for &k in ks {
        let hits = outcomes
            .iter()
            .filter(|o| o.ground_truth_rank.is_some_and(|r| r <= k))
            .count();
        out.insert(k, 100.0 * hits as f64 / outcomes.len() as f64);
    }
    Ok(out)
}

/// Mean of 1/rank over outcomes, counting ranks beyond K (or missing) as 0.
pub fn mrr_at_k(outcomes: &[RetrievalOutcome], k: usize) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Validation("empty outcome set".into()));
    }
    if k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    let sum: f64 = outcomes
        .iter()
        .map(|o| match o.ground_truth_rank {
            Some(rank) if rank <= k => 1.0 / rank as f64,
            _ => 0.0,
        })
        .sum();
    Ok(sum / outcomes.len() as f64)
}

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn stats_of(mut values: Vec<f64>) -> LatencyStats {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    LatencyStats {
        p50: nearest_rank(&values, 50.0),
        p95: nearest_rank(&values, 95.0),
        max: *values.last().unwrap(),
    }
}

/// p50/p95/max per stage and end-to-end (sum of stages per task).
pub fn latency_stats(outcomes: &[RetrievalOutcome]) -> Result<LatencySummary> {
    let timed: Vec<&RetrievalOutcome> = outcomes
        .iter()
        .filter(|o| !o.stage_latencies_ms.is_empty())
        .collect();
    if timed.is_empty() {
        return Err(Error::Validation("no outcomes with timings".into()));
    }
    let totals: Vec<f64> = timed
        .iter()
        .map(|o| o.stage_latencies_ms.values().sum())
        .collect();
    let mut per_stage_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for o in &timed {
        for (stage, &ms) in &o.stage_latencies_ms {
            per_stage_values.entry(stage.clone()).or_default().push(ms);
        }
    }
    Ok(LatencySummary {
        overall: stats_of(totals),
        per_stage: per_stage_values
            .into_iter()
            .map(|(stage, values)| (stage, stats_of(values)))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeVerdict {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentJudgeResult {
    pub task_id: String,
    /// None when the reply did not parse strictly as "Yes." / "No.".
    pub verdict: Option<JudgeVerdict>,
    pub raw: String,
}

impl IntentJudgeResult {
    pub fn intent(&self) -> Intent {
        match self.verdict {
            Some(JudgeVerdict::Yes) => Intent::Clear,
            Some(JudgeVerdict::No) => Intent::Ambiguous,
            None => Intent::Unjudged,
        }
    }
}

/// Assemble the judge prompt and parse its verdict strictly from the first
/// line ("Yes." / "No.").
pub fn judge_intent(
    task: &CompletionTask,
    record: &ScriptIncludeRecord,
    llm: &dyn LlmClient,
) -> Result<IntentJudgeResult> {
    let api_description = record
        .methods
        .iter()
        .map(|m| match &m.jsdoc {
            Some(doc) => format!("{}: {doc}", m.signature),
            None => m.signature.clone(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let code = match &task.code_after {
        Some(after) => format!("{}\n{}", task.code_before, after),
        None => task.code_before.clone(),
    };
    let user_prompt = format!(
        "### CODE:\n{code}\n\n### NAMESPACE:\n{}\n\n### API DESCRIPTIONS (Context):\n{api_description}\n\nDoes this namespace fit the code's intent?",
        record.namespace
    );
    let prompt = format!("{JUDGE_SYSTEM_PROMPT}\n\n{user_prompt}");
    let raw = llm
        .complete(&prompt, 8, 0.0)
        .map_err(|e| e.for_task(&task.id))?;
    let verdict = match raw.lines().next().map(str::trim) {
        Some("Yes.") => Some(JudgeVerdict::Yes),
        Some("No.") => Some(JudgeVerdict::No),
        _ => {
            tracing::warn!(task_id = %task.id, raw = %raw, "unparseable judge verdict");
            None
        }
    };
    Ok(IntentJudgeResult {
        task_id: task.id.clone(),
        verdict,
        raw,
    })
}

/// Build one report per labeled outcome set.
pub fn build_report(
    sets: &[(String, Vec<RetrievalOutcome>)],
    ks: &[usize],
    include_latency: bool,
) -> Result<BTreeMap<String, EvalReport>> {
    if sets.is_empty() {
        return Err(Error::Validation("no labeled outcome sets".into()));
    }
    let mut reports = BTreeMap::new();
    for (label, outcomes) in sets {
        let topk = topk_accuracy(outcomes, ks)?;
        let mut mrr = BTreeMap::new();
        for &k in ks {
            mrr.insert(k, mrr_at_k(outcomes, k)?);
        }
        let latency_ms = if include_latency {
            latency_stats(outcomes).ok()
        } else {
            None
        };
        reports.insert(
            label.clone(),
            EvalReport {
                n: outcomes.len(),
                topk_accuracy: topk,
                mrr_at_k: mrr,
                latency_ms,
            },
        );
    }
    Ok(reports)
}

/// Markdown table: rows = labels, columns = @K accuracy then MRR@K.
pub fn render_markdown(reports: &BTreeMap<String, EvalReport>, ks: &[usize]) -> String {
    let mut out = String::new();
    out.push_str("| Method | n |");
    for k in ks {
        out.push_str(&format!(" @{k} (%) |"));
    }
    for k in ks {
        out.push_str(&format!(" MRR@{k} |"));
    }
    out.push('\n');
    out.push_str("|---|---|");
    for _ in ks.iter().chain(ks.iter()) {
        out.push_str("---|");
    }
    out.push('\n');
    for (label, report) in reports {
        out.push_str(&format!("| {label} | {} |", report.n));
        for k in ks {
            out.push_str(&format!(" {:.2} |", report.topk_accuracy[k]));
        }
        for k in ks {
            out.push_str(&format!(" {:.4} |", report.mrr_at_k[k]));
        }
        out.push('\n');
    }
    out
}

/// CSV export with the same layout as the markdown table.
pub fn render_csv(reports: &BTreeMap<String, EvalReport>, ks: &[usize]) -> String {
    let mut out = String::from("label,n");
    for k in ks {
        out.push_str(&format!(",acc@{k}"));
    }
    for k in ks {
        out.push_str(&format!(",mrr@{k}"));
    }
    out.push('\n');
    for (label, report) in reports {
        out.push_str(&format!("{label},{}", report.n));
        for k in ks {
            out.push_str(&format!(",{:.4}", report.topk_accuracy[k]));
        }
        for k in ks {
            out.push_str(&format!(",{:.6}", report.mrr_at_k[k]));
        }
        out.push('\n');
    }
    out
}
