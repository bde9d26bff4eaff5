//! Package -> scope -> namespace knowledge graph used to prune retrieval
//! candidates before the first-stage retriever runs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::ScriptIncludeRecord;

/// Hierarchy of (package, scope, namespace) triples plus the global /
/// non-global partition. Immutable after build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub package_nodes: BTreeSet<String>,
    pub scope_nodes: BTreeSet<String>,
    pub namespace_nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String, String)>,
    pub global_namespaces: BTreeSet<String>,
    pub non_global_namespaces: BTreeSet<String>,
}

/// External hints that narrow the candidate universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope_hint: Option<String>,
    #[serde(default = "default_true")]
    pub include_global: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ScopeContext {
    fn default() -> Self {
        ScopeContext {
            package_hint: None,
            scope_hint: None,
            include_global: true,
        }
    }
}

impl ScopeContext {
    fn has_hints(&self) -> bool {
        self.package_hint.is_some() || self.scope_hint.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub global_count: usize,
    pub non_global_count: usize,
    /// Fraction of the universe removed by restricting to non-global.
    pub non_global_reduction_fraction: f64,
    /// Fraction of non-global namespaces used in exactly one (package, scope).
    pub one_to_one_fraction: f64,
}

/// Build the graph from corpus metadata. Empty corpus yields an empty graph.
pub fn build_graph(corpus: &[ScriptIncludeRecord]) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph {
        package_nodes: BTreeSet::new(),
        scope_nodes: BTreeSet::new(),
        namespace_nodes: BTreeSet::new(),
        edges: BTreeSet::new(),
        global_namespaces: BTreeSet::new(),
        non_global_namespaces: BTreeSet::new(),
    };
    for rec in corpus {
        graph.package_nodes.insert(rec.package.clone());
        graph.scope_nodes.insert(rec.scope.clone());
        graph.namespace_nodes.insert(rec.namespace.clone());
        graph.edges.insert((
            rec.package.clone(),
            rec.scope.clone(),
            rec.namespace.clone(),
        ));
        if rec.is_global {
            graph.global_namespaces.insert(rec.namespace.clone());
        } else {
            graph.non_global_namespaces.insert(rec.namespace.clone());
        }
    }
    graph
}

/// Restrict `universe` to namespaces matching the context's hints, unioned
/// with the global namespaces when `include_global`.
///
/// When hints are present but match nothing in the universe, the full
/// universe is returned instead of an empty set (with a warning); retrieval
/// degrades gracefully rather than going dark.
pub fn filter_candidates(
    graph: &KnowledgeGraph,
    context: &ScopeContext,
    universe: &BTreeSet<String>,
) -> BTreeSet<String> {
    if !context.has_hints() {
        if context.include_global {
            return universe.clone();
        }
        return universe
            .iter()
            .filter(|ns| graph.non_global_namespaces.contains(*ns))
            .cloned()
            .collect();
    }

    let hint_match: BTreeSet<&String> = graph
        .edges
        .iter()
        .filter(|(pkg, scope, _)| {
            context.package_hint.as_deref().map_or(true, |h| pkg == h)
                && context.scope_hint.as_deref().map_or(true, |h| scope == h)
        })
        .map(|(_, _, ns)| ns)
        .collect();

    let mut result: BTreeSet<String> = universe
        .iter()
        .filter(|ns| hint_match.contains(*ns))
        .cloned()
        .collect();
    if context.include_global {
        result.extend(
            universe
                .iter()
                .filter(|ns| graph.global_namespaces.contains(*ns))
                .cloned(),
        );
    }
    if result.is_empty() && !universe.is_empty() {
        tracing::warn!(
            package_hint = ?context.package_hint,
            scope_hint = ?context.scope_hint,
            "scope hints matched no candidates; falling back to full universe"
        );
        return universe.clone();
    }
    result
}

/// Counts and ratios of the global / non-global partition.
pub fn graph_stats(graph: &KnowledgeGraph) -> GraphStats {
    let global_count = graph.global_namespaces.len();
    let non_global_count = graph.non_global_namespaces.len();
    let total = global_count + non_global_count;
    let non_global_reduction_fraction = if total == 0 {
        0.0
    } else {
        global_count as f64 / total as f64
    };

    let mut pairs_per_ns: BTreeMap<&String, BTreeSet<(&String, &String)>> = BTreeMap::new();
    for (pkg, scope, ns) in &graph.edges {
        if graph.non_global_namespaces.contains(ns) {
            pairs_per_ns.entry(ns).or_default().insert((pkg, scope));
        }
    }
    let one_to_one = pairs_per_ns.values().filter(|p| p.len() == 1).count();
    let one_to_one_fraction = if non_global_count == 0 {
        0.0
    } else {
        one_to_one as f64 / non_global_count as f64
    };

    GraphStats {
        global_count,
        non_global_count,
        non_global_reduction_fraction,
        one_to_one_fraction,
    }
}

/// JSON snapshot of the edge list, for inspection and test fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub triples: Vec<(String, String, String)>,
}

impl KnowledgeGraph {
    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            triples: self.edges.iter().cloned().collect(),
        }
    }
}
