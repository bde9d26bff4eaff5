//! End-to-end retrieval orchestration: KG filter -> query build -> first
//! stage -> top-K cut, with per-stage wall-clock timings.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::CompletionTask;
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::index::IndexBundle;
use crate::kg::{filter_candidates, KnowledgeGraph, ScopeContext};
use crate::llm::LlmClient;
use crate::query::{
    make_description_query, make_hypothetical_query, make_prefix_query, Prompts, QueryBundle,
    Strategy, TrimConfig, QUERY_EMBED_INSTRUCTION,
};
use crate::tokenize::tokenize;

/// Which first-stage retriever scores the candidates. The two are
/// alternatives selected per run, never fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstStage {
    Bm25,
    Dense,
}

impl std::str::FromStr for FirstStage {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bm25" => Ok(FirstStage::Bm25),
            "dense" => Ok(FirstStage::Dense),
            other => Err(format!("unknown first stage {other:?} (use bm25|dense)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub namespace: String,
    pub score: f64,
    pub rank: usize,
    pub stage: FirstStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub task_id: String,
    pub strategy: Strategy,
    pub fim: bool,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_rank: Option<usize>,
    pub stage_latencies_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub first_stage: FirstStage,
    pub strategy: Strategy,
    pub fim: bool,
    pub k_retrieve: usize,
    pub use_kg_filter: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope_context: Option<ScopeContext>,
    pub trim: TrimConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            first_stage: FirstStage::Dense,
            strategy: Strategy::Prefix,
            fim: false,
            k_retrieve: 40,
            use_kg_filter: false,
            scope_context: None,
            trim: TrimConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_retrieve == 0 {
            return Err(Error::Validation("k_retrieve must be >= 1".into()));
        }
        self.trim.validate()
    }
}

/// Service clients the pipeline may need; unused ones can stay None.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub embedder: Option<&'a dyn Embedder>,
    pub llm: Option<&'a dyn LlmClient>,
    pub prompts: &'a Prompts,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

fn build_query(
    task: &CompletionTask,
    cfg: &PipelineConfig,
    services: &Services<'_>,
) -> Result<QueryBundle> {
    match cfg.strategy {
        Strategy::Prefix => make_prefix_query(task, &cfg.trim, services.prompts, cfg.fim),
        Strategy::Description => {
            let llm = services
                .llm
                .ok_or_else(|| Error::Config("description strategy requires an LLM client".into()))?;
            make_description_query(task, llm, &cfg.trim, services.prompts)
        }
        Strategy::Hypothetical => {
            let llm = services
                .llm
                .ok_or_else(|| Error::Config("hypothetical strategy requires an LLM client".into()))?;
            make_hypothetical_query(task, llm, &cfg.trim, services.prompts)
        }
    }
}

/// Run the pipeline for one task.
pub fn retrieve(
    task: &CompletionTask,
    bundle: &IndexBundle,
    graph: &KnowledgeGraph,
    services: &Services<'_>,
    cfg: &PipelineConfig,
) -> Result<RankedList> {
    cfg.validate()?;
    let mut latencies = BTreeMap::new();

    let start = Instant::now();
    let query = build_query(task, cfg, services).map_err(|e| match e {
        e @ Error::Task { .. } => e,
        e => e.for_task(&task.id),
    })?;
    latencies.insert("query_build".to_string(), elapsed_ms(start));

    let start = Instant::now();
    let all_namespaces: BTreeSet<String> = bundle.bm25.doc_ids.iter().cloned().collect();
    let universe = if cfg.use_kg_filter {
        let ctx = cfg.scope_context.clone().unwrap_or_default();
        filter_candidates(graph, &ctx, &all_namespaces)
    } else {
        all_namespaces
    };
    latencies.insert("filter".to_string(), elapsed_ms(start));

    let start = Instant::now();
    let scored: Vec<(String, f64)> = match cfg.first_stage {
        FirstStage::Bm25 => crate::index::score_bm25(&bundle.bm25, &tokenize(&query.text)),
        FirstStage::Dense => {
            let dense = bundle.dense.as_ref().ok_or_else(|| {
                Error::Config("dense first stage requires a dense index".into()).for_task(&task.id)
            })?;
            let embedder = services.embedder.ok_or_else(|| {
                Error::Config("dense first stage requires an embedder".into()).for_task(&task.id)
            })?;
            if embedder.dim() != dense.dim {
                return Err(Error::DimensionMismatch {
                    expected: dense.dim,
                    got: embedder.dim(),
                }
                .for_task(&task.id));
            }
            let vectors = embedder
                .embed(&[query.text.clone()], Some(QUERY_EMBED_INSTRUCTION))
                .map_err(|e| e.for_task(&task.id))?;
            crate::index::score_dense(dense, &vectors[0]).map_err(|e| e.for_task(&task.id))?
        }
    };
    let candidates: Vec<Candidate> = scored
        .into_iter()
        .filter(|(ns, _)| universe.contains(ns))
        .take(cfg.k_retrieve)
        .enumerate()
        .map(|(i, (namespace, score))| Candidate {
            namespace,
            score,
            rank: i + 1,
            stage: cfg.first_stage,
        })
        .collect();
    latencies.insert("first_stage".to_string(), elapsed_ms(start));

    let ground_truth_rank = candidates
        .iter()
        .find(|c| c.namespace == task.ground_truth)
        .map(|c| c.rank);

    Ok(RankedList {
        task_id: task.id.clone(),
        strategy: query.strategy,
        fim: query.fim,
        candidates,
        ground_truth_rank,
        stage_latencies_ms: latencies,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchFailure {
    pub task_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchResult {
    /// Successful lists in input order.
    pub lists: Vec<RankedList>,
    pub failures: Vec<BatchFailure>,
}

/// Run the pipeline over many tasks with bounded parallelism. Output order
/// matches input order regardless of completion order; per-task failures are
/// recorded and the batch continues.
pub fn retrieve_batch(
    tasks: &[CompletionTask],
    bundle: &IndexBundle,
    graph: &KnowledgeGraph,
    services: &Services<'_>,
    cfg: &PipelineConfig,
    parallelism: usize,
) -> Result<BatchResult> {
    cfg.validate()?;
    let parallelism = parallelism.max(1).min(tasks.len().max(1));
    let slots: Vec<Mutex<Option<Result<RankedList>>>> =
        tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..parallelism {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                let outcome = retrieve(&tasks[i], bundle, graph, services, cfg);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut lists = Vec::new();
    let mut failures = Vec::new();
    for (task, slot) in tasks.iter().zip(slots) {
        match slot.into_inner().unwrap().expect("slot filled") {
            Ok(list) => lists.push(list),
            Err(e) => failures.push(BatchFailure {
                task_id: task.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(BatchResult { lists, failures })
}
