//! Command-line entry point. Stdout carries machine-readable JSON; stderr
//! carries human diagnostics. Exit codes: 0 success, 2 configuration,
//! 3 transport, 4 data.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use deepcodeseek::config::{AppConfig, ConfigLayer};
use deepcodeseek::corpus::{
    corpus_stats, load_corpus, load_tasks, CompletionTask, Intent, ScriptIncludeRecord,
};
use deepcodeseek::datagen::{
    clean_dataset, generate_triplets, mine_hard_negatives, MiningConfig, SyntheticTriplet,
};
use deepcodeseek::embed::{Embedder, HttpEmbedder, MockEmbedder};
use deepcodeseek::error::{Error, Result};
use deepcodeseek::eval::{
    build_report, judge_intent, latency_stats, render_markdown, RetrievalOutcome,
};
use deepcodeseek::index::{
    build_bm25, build_dense, build_documents, load_index, save_index, DocumentSource, IndexBundle,
    DEFAULT_B, DEFAULT_K1,
};
use deepcodeseek::kg::{build_graph, graph_stats, KnowledgeGraph, ScopeContext};
use deepcodeseek::llm::{HttpLlm, LlmClient, MockLlm};
use deepcodeseek::pipeline::{retrieve, retrieve_batch, PipelineConfig, Services};
use deepcodeseek::query::Prompts;
use deepcodeseek::rerank::{rerank, ConstScorer, HttpScorer, OracleScorer, Scorer};
use deepcodeseek::serve::{serve_with_listener, ServeState};

#[derive(Parser)]
#[command(name = "deepcodeseek", version, about = "Namespace retrieval engine and evaluation harness")]
struct Cli {
    /// Path to a TOML config file (default: ./deepcodeseek.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by most commands; every flag overrides config and environment.
#[derive(Args, Debug, Default)]
struct CommonOpts {
    /// Corpus JSONL path.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Index directory.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Use the deterministic in-process embedder.
    #[arg(long)]
    mock_embedder: bool,
    /// Use the deterministic in-process LLM.
    #[arg(long)]
    mock_llm: bool,
    /// Use the deterministic in-process relevance scorer.
    #[arg(long)]
    mock_scorer: bool,
    /// Remote embedder endpoint URL.
    #[arg(long)]
    embedder_endpoint: Option<String>,
    /// Remote LLM endpoint URL.
    #[arg(long)]
    llm_endpoint: Option<String>,
    /// Remote scorer endpoint URL.
    #[arg(long)]
    scorer_endpoint: Option<String>,
    /// Query strategy: prefix | description | hypothetical.
    #[arg(long)]
    strategy: Option<String>,
    /// First-stage retriever: bm25 | dense.
    #[arg(long)]
    first_stage: Option<String>,
    /// Candidates to keep after the first stage.
    #[arg(long)]
    k: Option<usize>,
    /// Rerank depth.
    #[arg(long)]
    rerank_depth: Option<usize>,
    /// Worker threads for batch commands.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Enable knowledge-graph candidate filtering.
    #[arg(long)]
    kg_filter: bool,
    /// Package hint for the knowledge-graph filter.
    #[arg(long)]
    scope_package: Option<String>,
    /// Scope hint for the knowledge-graph filter.
    #[arg(long)]
    scope: Option<String>,
    /// Exclude global namespaces when a scope/package hint is set.
    #[arg(long)]
    no_global: bool,
}

impl CommonOpts {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            corpus: self.corpus.clone(),
            index_dir: self.index.clone(),
            embedder_endpoint: self.embedder_endpoint.clone(),
            llm_endpoint: self.llm_endpoint.clone(),
            scorer_endpoint: self.scorer_endpoint.clone(),
            mock_embedder: self.mock_embedder.then_some(true),
            mock_llm: self.mock_llm.then_some(true),
            mock_scorer: self.mock_scorer.then_some(true),
            strategy: self.strategy.clone(),
            first_stage: self.first_stage.clone(),
            k_retrieve: self.k,
            rerank_depth: self.rerank_depth,
            use_kg_filter: self.kg_filter.then_some(true),
            parallelism: self.parallelism,
            ..Default::default()
        }
    }

    fn scope_context(&self) -> Option<ScopeContext> {
        if self.scope_package.is_none() && self.scope.is_none() && !self.no_global {
            return None;
        }
        Some(ScopeContext {
            package_hint: self.scope_package.clone(),
            scope_hint: self.scope.clone(),
            include_global: !self.no_global,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the retrieval index from a corpus.
    BuildIndex {
        #[command(flatten)]
        common: CommonOpts,
        /// Output index directory.
        #[arg(long)]
        out: PathBuf,
        /// Document source: jsdoc | raw.
        #[arg(long, default_value = "jsdoc")]
        source: String,
        /// BM25 term-frequency saturation.
        #[arg(long, default_value_t = DEFAULT_K1)]
        k1: f64,
        /// BM25 length normalization.
        #[arg(long, default_value_t = DEFAULT_B)]
        b: f64,
    },
    /// Retrieve candidates for a single task (file or stdin).
    Retrieve {
        #[command(flatten)]
        common: CommonOpts,
        /// Task JSON file; "-" reads stdin.
        #[arg(long, default_value = "-")]
        task: String,
        /// Apply the yes/no reranker to the candidates.
        #[arg(long)]
        rerank: bool,
    },
    /// Evaluate one or more strategies over a task set.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Tasks JSONL path.
        #[arg(long)]
        tasks: PathBuf,
        /// Comma-separated strategies to evaluate.
        #[arg(long, default_value = "prefix")]
        strategies: String,
        /// Comma-separated K values for accuracy/MRR columns.
        #[arg(long, default_value = "5,10,20,40")]
        ks: String,
        /// Apply the reranker after the first stage.
        #[arg(long)]
        rerank: bool,
        /// Rerank with the ground-truth oracle scorer (diagnostics only).
        #[arg(long)]
        oracle_rerank: bool,
        /// Only evaluate tasks with this stored intent: clear | ambiguous.
        #[arg(long)]
        filter_intent: Option<String>,
        /// Exclude latency percentiles from the report (byte-stable output).
        #[arg(long)]
        no_latency: bool,
        /// Write the markdown table here (otherwise printed to stderr).
        #[arg(long)]
        out_md: Option<PathBuf>,
    },
    /// Clean a triplet pool: leaks, near-mentions, near-duplicates.
    Clean {
        /// Triplet JSONL path.
        #[arg(long)]
        triplets: PathBuf,
        /// Write surviving triplets here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Token-set similarity threshold for deduplication.
        #[arg(long, default_value_t = 0.90)]
        threshold: f64,
    },
    /// Mine hard negatives for a triplet pool against a dense index.
    Mine {
        #[command(flatten)]
        common: CommonOpts,
        /// Triplet JSONL path.
        #[arg(long)]
        triplets: PathBuf,
        /// Write hard-negative sets here (JSONL).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rank window as "min:max".
        #[arg(long, default_value = "2:30")]
        range: String,
        /// Required score gap below the positive.
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        /// Negatives required per triplet.
        #[arg(long, default_value_t = 5)]
        num_negatives: usize,
    },
    /// Generate synthetic triplets with an LLM.
    Generate {
        #[command(flatten)]
        common: CommonOpts,
        /// Triplets to request per namespace.
        #[arg(long, default_value_t = 1)]
        n_per_namespace: usize,
        /// File of namespaces (one per line) that must not be generated for.
        #[arg(long)]
        exclude: Option<PathBuf>,
        /// Write generated triplets here (JSONL).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judge task intent clarity with an LLM.
    Judge {
        #[command(flatten)]
        common: CommonOpts,
        /// Tasks JSONL path.
        #[arg(long)]
        tasks: PathBuf,
        /// Write per-task judge results here (JSONL).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the retrieval pipeline over HTTP.
    Serve {
        #[command(flatten)]
        common: CommonOpts,
        /// Listen address.
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Measure per-stage retrieval latency.
    Bench {
        #[command(flatten)]
        common: CommonOpts,
        /// Tasks JSONL path.
        #[arg(long)]
        tasks: PathBuf,
        /// Comma-separated configurations: none or rerank@DEPTH.
        #[arg(long, default_value = "none")]
        configs: String,
        /// Iterations over the task set per configuration.
        #[arg(long, default_value_t = 1)]
        iters: usize,
        /// Warmup iterations discarded before measuring.
        #[arg(long, default_value_t = 0)]
        warmup: usize,
    },
    /// Print corpus and knowledge-graph statistics.
    Stats {
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Task { source, .. } => exit_code(source),
        Error::Config(_) | Error::Validation(_) | Error::Io { .. } => 2,
        Error::Transport { .. } => 3,
        _ => 4,
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();

    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        std::process::exit(exit_code(&e));
    }
}

fn load_config(cli_config: Option<&PathBuf>, common: &CommonOpts) -> Result<AppConfig> {
    let mut cfg = AppConfig::load(cli_config.map(|p| p.as_path()))?;
    cfg.apply(&common.layer())?;
    cfg.validate()?;
    Ok(cfg)
}

fn make_embedder(cfg: &AppConfig) -> Result<Option<Box<dyn Embedder>>> {
    if cfg.mock_embedder {
        return Ok(Some(Box::new(MockEmbedder::new(cfg.embedder_dim))));
    }
    match &cfg.embedder_endpoint {
        Some(endpoint) => Ok(Some(Box::new(HttpEmbedder::new(
            endpoint.clone(),
            cfg.embedder_dim,
            cfg.embedder_auth_env.as_deref(),
            Duration::from_secs(cfg.timeout_secs),
        )?))),
        None => Ok(None),
    }
}

fn make_llm(cfg: &AppConfig) -> Result<Option<Box<dyn LlmClient>>> {
    if cfg.mock_llm {
        return Ok(Some(Box::new(MockLlm::echo())));
    }
    match &cfg.llm_endpoint {
        Some(endpoint) => Ok(Some(Box::new(HttpLlm::new(
            endpoint.clone(),
            cfg.llm_auth_env.as_deref(),
            Duration::from_secs(cfg.timeout_secs),
        )?))),
        None => Ok(None),
    }
}

fn make_scorer(cfg: &AppConfig) -> Result<Option<Box<dyn Scorer>>> {
    if cfg.mock_scorer {
        return Ok(Some(Box::new(ConstScorer(0.5))));
    }
    match &cfg.scorer_endpoint {
        Some(endpoint) => Ok(Some(Box::new(HttpScorer::new(
            endpoint.clone(),
            None,
            Duration::from_secs(cfg.timeout_secs),
        )?))),
        None => Ok(None),
    }
}

fn require_index(cfg: &AppConfig) -> Result<IndexBundle> {
    let dir = cfg
        .index_dir
        .as_ref()
        .ok_or_else(|| Error::Config("index directory required (--index)".into()))?;
    load_index(dir)
}

fn require_corpus(cfg: &AppConfig) -> Result<Vec<ScriptIncludeRecord>> {
    let path = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Config("corpus path required (--corpus)".into()))?;
    load_corpus(path)
}

fn optional_corpus(cfg: &AppConfig) -> Result<Option<Vec<ScriptIncludeRecord>>> {
    match &cfg.corpus {
        Some(path) => Ok(Some(load_corpus(path)?)),
        None => Ok(None),
    }
}

fn graph_for(corpus: Option<&[ScriptIncludeRecord]>) -> KnowledgeGraph {
    build_graph(corpus.unwrap_or(&[]))
}

/// namespace -> document text for the reranker, matching the index source.
fn document_map(
    corpus: &[ScriptIncludeRecord],
    source: DocumentSource,
) -> BTreeMap<String, String> {
    build_documents(corpus, source)
        .into_iter()
        .map(|d| (d.namespace, d.text))
        .collect()
}

fn pipeline_config(cfg: &AppConfig, common: &CommonOpts) -> PipelineConfig {
    let scope_context = common.scope_context();
    PipelineConfig {
        first_stage: cfg.first_stage,
        strategy: cfg.strategy,
        fim: false,
        k_retrieve: cfg.k_retrieve,
        use_kg_filter: cfg.use_kg_filter || scope_context.is_some(),
        scope_context,
        trim: cfg.trim,
    }
}

fn parse_ks(text: &str) -> Result<Vec<usize>> {
    let ks: Vec<usize> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad K value {s:?}")))
        })
        .collect::<Result<_>>()?;
    if ks.is_empty() || ks.iter().any(|&k| k == 0) {
        return Err(Error::Config("ks must be non-empty, each >= 1".into()));
    }
    Ok(ks)
}

fn load_triplets(path: &PathBuf) -> Result<Vec<SyntheticTriplet>> {
    let path_str = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&path_str, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<T: serde::Serialize>(items: &[T], path: &PathBuf) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildIndex {
            common,
            out,
            source,
            k1,
            b,
        } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let corpus = require_corpus(&cfg)?;
            let source: DocumentSource = source.parse().map_err(Error::Config)?;
            let docs = build_documents(&corpus, source);
            let bm25 = build_bm25(&docs, k1, b)?;
            let dense = match make_embedder(&cfg)? {
                Some(embedder) => Some(build_dense(&docs, embedder.as_ref(), None, 32)?),
                None => {
                    eprintln!("no embedder configured; building BM25 index only");
                    None
                }
            };
            let has_dense = dense.is_some();
            let bundle = IndexBundle { source, bm25, dense };
            save_index(&bundle, &out)?;
            let stats = corpus_stats(&corpus)?;
            println!(
                "{}",
                serde_json::json!({
                    "index_dir": out,
                    "documents": docs.len(),
                    "source": source,
                    "dense": has_dense,
                    "corpus": stats,
                })
            );
            Ok(())
        }

        Command::Retrieve {
            common,
            task,
            rerank: do_rerank,
        } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let bundle = require_index(&cfg)?;
            let corpus = optional_corpus(&cfg)?;
            let graph = graph_for(corpus.as_deref());
            let embedder = make_embedder(&cfg)?;
            let llm = make_llm(&cfg)?;
            let prompts = Prompts::default();
            let services = Services {
                embedder: embedder.as_deref(),
                llm: llm.as_deref(),
                prompts: &prompts,
            };
            let pcfg = pipeline_config(&cfg, &common);
            if pcfg.use_kg_filter && corpus.is_none() {
                return Err(Error::Config(
                    "knowledge-graph filtering requires --corpus".into(),
                ));
            }

            let text = if task == "-" {
                let mut buf = String::new();
                std::io::stdin()
                    .read_to_string(&mut buf)
                    .map_err(|e| Error::io("stdin", e))?;
                buf
            } else {
                std::fs::read_to_string(&task).map_err(|e| Error::io(&task, e))?
            };
            let task: CompletionTask = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: "task input".into(),
                line: 1,
                message: e.to_string(),
            })?;

            let list = retrieve(&task, &bundle, &graph, &services, &pcfg)?;
            if do_rerank {
                let scorer = make_scorer(&cfg)?
                    .ok_or_else(|| Error::Config("rerank requires a scorer (--mock-scorer or --scorer-endpoint)".into()))?;
                let corpus = corpus.ok_or_else(|| {
                    Error::Config("rerank requires --corpus for document text".into())
                })?;
                let docs = document_map(&corpus, bundle.source);
                let lookup = |ns: &str| docs.get(ns).cloned();
                let reranked = rerank(
                    &list,
                    &lookup,
                    scorer.as_ref(),
                    cfg.rerank_depth,
                    Some(&task.ground_truth),
                    "",
                );
                println!("{}", serde_json::to_string(&reranked).expect("serializes"));
            } else {
                println!("{}", serde_json::to_string(&list).expect("serializes"));
            }
            Ok(())
        }

        Command::Evaluate {
            common,
            tasks,
            strategies,
            ks,
            rerank: do_rerank,
            oracle_rerank,
            filter_intent,
            no_latency,
            out_md,
        } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let bundle = require_index(&cfg)?;
            let corpus = require_corpus(&cfg)?;
            let graph = build_graph(&corpus);
            let all_tasks = load_tasks(&tasks, Some(&corpus))?;
            let ks = parse_ks(&ks)?;

            let tasks: Vec<CompletionTask> = match filter_intent.as_deref() {
                None => all_tasks,
                Some("clear") => all_tasks
                    .into_iter()
                    .filter(|t| t.intent == Intent::Clear)
                    .collect(),
                Some("ambiguous") => all_tasks
                    .into_iter()
                    .filter(|t| t.intent == Intent::Ambiguous)
                    .collect(),
                Some(other) => {
                    return Err(Error::Config(format!(
                        "unknown intent filter {other:?} (use clear|ambiguous)"
                    )))
                }
            };
            if tasks.is_empty() {
                return Err(Error::Validation("no tasks left to evaluate".into()));
            }

            let embedder = make_embedder(&cfg)?;
            let llm = make_llm(&cfg)?;
            let prompts = Prompts::default();
            let services = Services {
                embedder: embedder.as_deref(),
                llm: llm.as_deref(),
                prompts: &prompts,
            };
            let scorer = if do_rerank && !oracle_rerank {
                Some(make_scorer(&cfg)?.ok_or_else(|| {
                    Error::Config("rerank requires a scorer (--mock-scorer or --scorer-endpoint)".into())
                })?)
            } else {
                None
            };
            let docs = document_map(&corpus, bundle.source);
            let lookup = |ns: &str| docs.get(ns).cloned();

            let mut sets: Vec<(String, Vec<RetrievalOutcome>)> = Vec::new();
            let mut total_failures = 0usize;
            for strategy in strategies.split(',') {
                let strategy = strategy.trim();
                let mut pcfg = pipeline_config(&cfg, &common);
                pcfg.strategy = strategy.parse().map_err(Error::Config)?;
                let batch = retrieve_batch(&tasks, &bundle, &graph, &services, &pcfg, cfg.parallelism)?;
                for failure in &batch.failures {
                    eprintln!("task {} failed: {}", failure.task_id, failure.error);
                }
                total_failures += batch.failures.len();
                let gt_of: BTreeMap<&str, &str> = tasks
                    .iter()
                    .map(|t| (t.id.as_str(), t.ground_truth.as_str()))
                    .collect();
                let outcomes: Vec<RetrievalOutcome> = batch
                    .lists
                    .iter()
                    .map(|list| {
                        let (rank, reranked) = if do_rerank || oracle_rerank {
                            let gt = gt_of.get(list.task_id.as_str()).copied().unwrap_or("");
                            let oracle;
                            let scorer_ref: &dyn Scorer = if oracle_rerank {
                                oracle = OracleScorer { target: gt.to_string() };
                                &oracle
                            } else {
                                scorer.as_deref().expect("scorer present when do_rerank")
                            };
                            let out =
                                rerank(list, &lookup, scorer_ref, cfg.rerank_depth, Some(gt), "");
                            (out.ground_truth_rank, true)
                        } else {
                            (list.ground_truth_rank, false)
                        };
                        RetrievalOutcome {
                            task_id: list.task_id.clone(),
                            ground_truth_rank: rank,
                            stage_latencies_ms: if no_latency {
                                BTreeMap::new()
                            } else {
                                list.stage_latencies_ms.clone()
                            },
                            strategy: list.strategy,
                            reranked,
                        }
                    })
                    .collect();
                let label = if do_rerank || oracle_rerank {
                    format!("{strategy}+rerank")
                } else {
                    strategy.to_string()
                };
                sets.push((label, outcomes));
            }

            if sets.iter().all(|(_, o)| o.is_empty()) {
                return Err(Error::Validation("every strategy failed on every task".into()));
            }
            let reports = build_report(&sets, &ks, !no_latency)?;
            let markdown = render_markdown(&reports, &ks);
            match out_md {
                Some(path) => std::fs::write(&path, &markdown)
                    .map_err(|e| Error::io(path.display().to_string(), e))?,
                None => eprintln!("{markdown}"),
            }
            println!("{}", serde_json::to_string_pretty(&reports).expect("serializes"));
            if total_failures > 0 {
                eprintln!("{total_failures} task evaluations failed");
            }
            Ok(())
        }

        Command::Clean {
            triplets,
            out,
            threshold,
        } => {
            let pool = load_triplets(&triplets)?;
            let (kept, report) = clean_dataset(&pool, threshold);
            if let Some(path) = out {
                write_jsonl(&kept, &path)?;
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("serializes"));
            Ok(())
        }

        Command::Mine {
            common,
            triplets,
            out,
            range,
            margin,
            num_negatives,
        } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let corpus = require_corpus(&cfg)?;
            let pool = load_triplets(&triplets)?;
            let embedder = make_embedder(&cfg)?
                .ok_or_else(|| Error::Config("mining requires an embedder (--mock-embedder or --embedder-endpoint)".into()))?;
            let docs = build_documents(&corpus, DocumentSource::Jsdoc);
            let index = build_dense(&docs, embedder.as_ref(), None, 32)?;

            let (min_s, max_s) = range
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad --range {range:?}, expected min:max")))?;
            let mcfg = MiningConfig {
                range_min: min_s
                    .parse()
                    .map_err(|_| Error::Config(format!("bad range min {min_s:?}")))?,
                range_max: max_s
                    .parse()
                    .map_err(|_| Error::Config(format!("bad range max {max_s:?}")))?,
                margin,
                num_negatives,
            };
            let (sets, report) = mine_hard_negatives(&pool, &index, embedder.as_ref(), &mcfg)?;
            if let Some(path) = out {
                write_jsonl(&sets, &path)?;
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("serializes"));
            Ok(())
        }

        Command::Generate {
            common,
            n_per_namespace,
            exclude,
            out,
        } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let corpus = require_corpus(&cfg)?;
            let llm = make_llm(&cfg)?
                .ok_or_else(|| Error::Config("generation requires an LLM (--mock-llm or --llm-endpoint)".into()))?;
            let exclusion: BTreeSet<String> = match exclude {
                Some(path) => std::fs::read_to_string(&path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?
                    .lines()
                    .map(|l| l.trim().to_string())
                    .filter(|l| !l.is_empty())
                    .collect(),
                None => BTreeSet::new(),
            };
            let prompts = Prompts::default();
            let (triplets, report) =
                generate_triplets(&corpus, llm.as_ref(), &prompts, n_per_namespace, &exclusion)?;
            if let Some(path) = out {
                write_jsonl(&triplets, &path)?;
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("serializes"));
            Ok(())
        }

        Command::Judge {
            common,
            tasks,
            out,
        } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let corpus = require_corpus(&cfg)?;
            let llm = make_llm(&cfg)?
                .ok_or_else(|| Error::Config("judging requires an LLM (--mock-llm or --llm-endpoint)".into()))?;
            let tasks = load_tasks(&tasks, Some(&corpus))?;
            let by_ns: BTreeMap<&str, &ScriptIncludeRecord> = corpus
                .iter()
                .map(|r| (r.namespace.as_str(), r))
                .collect();
            let mut results = Vec::new();
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for task in &tasks {
                let record = by_ns
                    .get(task.ground_truth.as_str())
                    .expect("ground truth resolved at load");
                let result = judge_intent(task, record, llm.as_ref())?;
                let intent = result.intent();
                *counts
                    .entry(match intent {
                        Intent::Clear => "clear",
                        Intent::Ambiguous => "ambiguous",
                        Intent::Unjudged => "unjudged",
                    })
                    .or_default() += 1;
                results.push(result);
            }
            if let Some(path) = out {
                write_jsonl(&results, &path)?;
            }
            println!(
                "{}",
                serde_json::json!({ "tasks": tasks.len(), "verdicts": counts })
            );
            Ok(())
        }

        Command::Serve { common, addr } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let bundle = require_index(&cfg)?;
            let corpus = optional_corpus(&cfg)?;
            let graph = graph_for(corpus.as_deref());
            let documents = corpus
                .as_deref()
                .map(|c| document_map(c, bundle.source))
                .unwrap_or_default();
            let state = std::sync::Arc::new(ServeState {
                graph,
                embedder: make_embedder(&cfg)?,
                llm: make_llm(&cfg)?,
                scorer: make_scorer(&cfg)?,
                prompts: Prompts::default(),
                defaults: pipeline_config(&cfg, &common),
                rerank_depth: cfg.rerank_depth,
                documents,
                request_timeout: Duration::from_secs(cfg.timeout_secs),
                bundle,
            });
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| Error::transport("serve", e.to_string()))?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| Error::io(&addr, e))?;
                eprintln!("listening on http://{addr}");
                serve_with_listener(listener, state, async {
                    let _ = tokio::signal::ctrl_c().await;
                    eprintln!("shutting down");
                })
                .await
            })
        }

        Command::Bench {
            common,
            tasks,
            configs,
            iters,
            warmup,
        } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let bundle = require_index(&cfg)?;
            let corpus = require_corpus(&cfg)?;
            let graph = build_graph(&corpus);
            let tasks = load_tasks(&tasks, Some(&corpus))?;
            let embedder = make_embedder(&cfg)?;
            let llm = make_llm(&cfg)?;
            let prompts = Prompts::default();
            let services = Services {
                embedder: embedder.as_deref(),
                llm: llm.as_deref(),
                prompts: &prompts,
            };
            let docs = document_map(&corpus, bundle.source);
            let lookup = |ns: &str| docs.get(ns).cloned();
            let pcfg = pipeline_config(&cfg, &common);

            let mut summaries = BTreeMap::new();
            for config in configs.split(',') {
                let config = config.trim();
                let rerank_depth = match config {
                    "none" => None,
                    other => match other.strip_prefix("rerank@") {
                        Some(depth) => Some(depth.parse::<usize>().map_err(|_| {
                            Error::Config(format!("bad bench config {other:?}"))
                        })?),
                        None => {
                            return Err(Error::Config(format!(
                                "unknown bench config {config:?} (use none or rerank@DEPTH)"
                            )))
                        }
                    },
                };
                let scorer = if rerank_depth.is_some() {
                    Some(make_scorer(&cfg)?.ok_or_else(|| {
                        Error::Config("rerank config requires a scorer (--mock-scorer or --scorer-endpoint)".into())
                    })?)
                } else {
                    None
                };

                let mut outcomes = Vec::new();
                for iter in 0..(warmup + iters) {
                    for task in &tasks {
                        let list = retrieve(task, &bundle, &graph, &services, &pcfg)?;
                        let mut latencies = list.stage_latencies_ms.clone();
                        let mut rank = list.ground_truth_rank;
                        if let (Some(depth), Some(scorer)) = (rerank_depth, &scorer) {
                            let start = Instant::now();
                            let out = rerank(
                                &list,
                                &lookup,
                                scorer.as_ref(),
                                depth,
                                Some(&task.ground_truth),
                                "",
                            );
                            latencies.insert(
                                "rerank".to_string(),
                                start.elapsed().as_secs_f64() * 1000.0,
                            );
                            rank = out.ground_truth_rank;
                        }
                        if iter >= warmup {
                            outcomes.push(RetrievalOutcome {
                                task_id: task.id.clone(),
                                ground_truth_rank: rank,
                                stage_latencies_ms: latencies,
                                strategy: list.strategy,
                                reranked: rerank_depth.is_some(),
                            });
                        }
                    }
                }
                summaries.insert(config.to_string(), latency_stats(&outcomes)?);
            }

            for (config, summary) in &summaries {
                eprintln!(
                    "{config}: total p50={:.2}ms p95={:.2}ms max={:.2}ms",
                    summary.overall.p50, summary.overall.p95, summary.overall.max
                );
                for (stage, stats) in &summary.per_stage {
                    eprintln!(
                        "  {stage}: p50={:.2}ms p95={:.2}ms max={:.2}ms",
                        stats.p50, stats.p95, stats.max
                    );
                }
            }
            println!("{}", serde_json::to_string_pretty(&summaries).expect("serializes"));
            Ok(())
        }

        Command::Stats { common } => {
            let cfg = load_config(cli.config.as_ref(), &common)?;
            let corpus = require_corpus(&cfg)?;
            let stats = corpus_stats(&corpus)?;
            let graph = build_graph(&corpus);
            let gstats = graph_stats(&graph);
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "corpus": stats,
                    "graph": gstats,
                }))
                .expect("serializes")
            );
            Ok(())
        }
    }
}
