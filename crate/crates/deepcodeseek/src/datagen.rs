//! Synthetic triplet generation, dataset decontamination, hard-negative
//! mining and the first-token reward function.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::index::DenseIndex;
use crate::llm::LlmClient;
use crate::query::Prompts;
use crate::tokenize::{identifiers, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletSource {
    LlmGenerated,
    Imported,
}

/// One synthetic training sample; the target namespace is used only inside
/// `code_middle`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTriplet {
    pub id: String,
    pub code_before: String,
    pub code_middle: String,
    pub code_after: String,
    pub target: String,
    pub source: TripletSource,
}

/// True iff the target namespace occurs as a whole identifier (camelCase- and
/// snake_case-aware, case-insensitive) in code_before or code_after. The
/// middle is the answer, not a leak.
pub fn detect_leak(triplet: &SyntheticTriplet) -> bool {
    let target_tokens = tokenize(&triplet.target);
    if target_tokens.is_empty() {
        return false;
    }
    [&triplet.code_before, &triplet.code_after]
        .iter()
        .any(|code| {
            identifiers(code)
                .iter()
                .any(|ident| tokenize(ident) == target_tokens)
        })
}

/// True iff the target's token sequence occurs (contiguously) anywhere in
/// `text` after tokenization — looser than the whole-identifier rule, it
/// also catches comment mentions and prefixed/suffixed identifiers.
fn mentions_target(text: &str, target_tokens: &[String]) -> bool {
    let tokens = tokenize(text);
    tokens
        .windows(target_tokens.len())
        .any(|w| w == target_tokens)
}

const NEAR_MENTION_LINES: usize = 3;

fn near_mention(triplet: &SyntheticTriplet) -> bool {
    let target_tokens = tokenize(&triplet.target);
    if target_tokens.is_empty() {
        return false;
    }
    let before_lines: Vec<&str> = triplet.code_before.lines().collect();
    let tail_start = before_lines.len().saturating_sub(NEAR_MENTION_LINES);
    let before_tail = before_lines[tail_start..].join("\n");
    let after_head = triplet
        .code_after
        .lines()
        .take(NEAR_MENTION_LINES)
        .collect::<Vec<_>>()
        .join("\n");
    mentions_target(&before_tail, &target_tokens) || mentions_target(&after_head, &target_tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    pub pass: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub kept: usize,
    pub removed: Vec<Removal>,
}

/// Three cleaning passes: whole-identifier leaks, near-mentions of the
/// target close to the completion span, then fuzzy near-duplicates.
/// Duplicate clusters keep the lowest id.
pub fn clean_dataset(
    triplets: &[SyntheticTriplet],
    dedup_threshold: f64,
) -> (Vec<SyntheticTriplet>, CleanReport) {
    let mut removed = Vec::new();
    let mut survivors: Vec<&SyntheticTriplet> = Vec::new();
    for t in triplets {
        if detect_leak(t) {
            removed.push(Removal {
                id: t.id.clone(),
                pass: 1,
                reason: "target leaked into code_before/code_after".into(),
            });
        } else {
            survivors.push(t);
        }
    }
    let mut pass2_survivors: Vec<&SyntheticTriplet> = Vec::new();
    for t in survivors {
        if near_mention(t) {
            removed.push(Removal {
                id: t.id.clone(),
                pass: 2,
                reason: "target mentioned near the completion span".into(),
            });
        } else {
            pass2_survivors.push(t);
        }
    }
    let owned: Vec<SyntheticTriplet> = pass2_survivors.into_iter().cloned().collect();
    let (kept, dedup_removed) = fuzzy_dedup_with_report(&owned, dedup_threshold);
    for id in dedup_removed {
        removed.push(Removal {
            id,
            pass: 3,
            reason: "fuzzy near-duplicate".into(),
        });
    }
    let report = CleanReport {
        kept: kept.len(),
        removed,
    };
    (kept, report)
}

fn token_set(t: &SyntheticTriplet) -> BTreeSet<String> {
    let combined = format!("{}\n{}\n{}", t.code_before, t.code_middle, t.code_after);
    tokenize(&combined).into_iter().collect()
}

/// Order-insensitive similarity: |A ∩ B| / |A ∪ B| over code tokens.
fn token_set_ratio(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    inter as f64 / union as f64
}

/// Collapse near-duplicate clusters (transitive closure over pairwise
/// similarity >= threshold), keeping the lowest id per cluster.
pub fn fuzzy_dedup(triplets: &[SyntheticTriplet], threshold: f64) -> Vec<SyntheticTriplet> {
    fuzzy_dedup_with_report(triplets, threshold).0
}

fn fuzzy_dedup_with_report(
    triplets: &[SyntheticTriplet],
    threshold: f64,
) -> (Vec<SyntheticTriplet>, Vec<String>) {
    let mut sorted: Vec<&SyntheticTriplet> = triplets.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let sets: Vec<BTreeSet<String>> = sorted.iter().map(|t| token_set(t)).collect();

    // union-find so a~b, b~c collapses into one cluster
    let mut parent: Vec<usize> = (0..sorted.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            if token_set_ratio(&sets[i], &sets[j]) >= threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    // lower index (lower id) becomes the root
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for i in 0..sorted.len() {
        if find(&mut parent, i) == i {
            kept.push(sorted[i].clone());
        } else {
            removed.push(sorted[i].id.clone());
        }
    }
    (kept, removed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub range_min: usize,
    pub range_max: usize,
    pub margin: f64,
    pub num_negatives: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            range_min: 2,
            range_max: 30,
            margin: 0.05,
            num_negatives: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNegative {
    pub namespace: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardNegativeSet {
    pub anchor_id: String,
    pub positive: String,
    pub positive_score: f64,
    pub negatives: Vec<ScoredNegative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub kept: usize,
    pub discarded: Vec<Removal>,
    pub config: MiningConfig,
}

/// Retrieve candidates for each triplet and draw negatives from the rank
/// window [range_min, range_max] that score below positive − margin.
/// Triplets whose positive is not retrieved within range_max, or that lack
/// num_negatives qualifying negatives, are discarded with a reason.
pub fn mine_hard_negatives(
    triplets: &[SyntheticTriplet],
    index: &DenseIndex,
    embedder: &dyn Embedder,
    cfg: &MiningConfig,
) -> Result<(Vec<HardNegativeSet>, MiningReport)> {
    if cfg.range_min < 1 || cfg.range_max < cfg.range_min || cfg.num_negatives < 1 {
        return Err(Error::Validation(format!(
            "invalid mining config {cfg:?}"
        )));
    }
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for t in triplets {
        let query = format!("{}\n{}\n{}", t.code_before, t.code_middle, t.code_after);
        let vectors = embedder.embed(&[query], None)?;
        let ranked = crate::index::score_dense(index, &vectors[0])?;
        let positive_pos = ranked.iter().position(|(ns, _)| *ns == t.target);
        let Some(pos) = positive_pos.filter(|&p| p < cfg.range_max) else {
            discarded.push(Removal {
                id: t.id.clone(),
                pass: 0,
                reason: "positive_not_retrieved".into(),
            });
            continue;
        };
        let positive_score = ranked[pos].1;
        let negatives: Vec<ScoredNegative> = ranked
            .iter()
            .enumerate()
            .filter(|&(i, (ns, score))| {
                let rank = i + 1;
                rank >= cfg.range_min
                    && rank <= cfg.range_max
                    && *ns != t.target
                    && *score < positive_score - cfg.margin
            })
            .map(|(_, (ns, score))| ScoredNegative {
                namespace: ns.clone(),
                score: *score,
            })
            .take(cfg.num_negatives)
            .collect();
        if negatives.len() < cfg.num_negatives {
            discarded.push(Removal {
                id: t.id.clone(),
                pass: 0,
                reason: "insufficient_negatives".into(),
            });
            continue;
        }
        kept.push(HardNegativeSet {
            anchor_id: t.id.clone(),
            positive: t.target.clone(),
            positive_score,
            negatives,
        });
    }
    let report = MiningReport {
        kept: kept.len(),
        discarded,
        config: cfg.clone(),
    };
    Ok((kept, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardLabel {
    Positive,
    Negative,
}

/// First-token reward: the first whitespace-delimited token, case-folded,
/// must start with "yes" for positive labels or "no" for negative labels to
/// earn +1.0; anything else (including unparseable output) earns -1.0.
pub fn reward(completion_text: &str, label: RewardLabel) -> f64 {
    let first = completion_text
        .split_whitespace()
        .next()
        .unwrap_or("")
        .to_lowercase();
    let says_yes = first.starts_with("yes");
    let says_no = !says_yes && first.starts_with("no");
    let correct = match label {
        RewardLabel::Positive => says_yes,
        RewardLabel::Negative => says_no,
    };
    if correct {
        1.0
    } else {
        -1.0
    }
}

/// Parse an LLM response laid out as three fenced sections (before / middle /
/// after).
fn parse_triplet_response(text: &str) -> Option<(String, String, String)> {
    let section = |name: &str| -> Option<String> {
        let marker = format!("```{name}");
        let start = text.find(&marker)? + marker.len();
        let rest = &text[start..];
        let end = rest.find("```")?;
        Some(rest[..end].trim_matches('\n').to_string())
    };
    Some((section("before")?, section("middle")?, section("after")?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generated: usize,
    pub discarded: Vec<Removal>,
}

/// Ask the LLM for `n_per_namespace` usage triplets per corpus record.
/// Namespaces overlapping the exclusion set abort before any LLM call.
pub fn generate_triplets(
    corpus_subset: &[crate::corpus::ScriptIncludeRecord],
    llm: &dyn LlmClient,
    prompts: &Prompts,
    n_per_namespace: usize,
    exclusion_set: &BTreeSet<String>,
) -> Result<(Vec<SyntheticTriplet>, GenerationReport)> {
    let contaminated: Vec<String> = corpus_subset
        .iter()
        .filter(|r| exclusion_set.contains(&r.namespace))
        .map(|r| r.namespace.clone())
        .collect();
    if !contaminated.is_empty() {
        return Err(Error::Contamination {
            namespaces: contaminated,
        });
    }
    let mut triplets = Vec::new();
    let mut discarded = Vec::new();
    for record in corpus_subset {
        for i in 0..n_per_namespace {
            let id = format!("{}-{i}", record.namespace);
            let prompt = prompts
                .triplet_prompt
                .replace("{namespace}", &record.namespace)
                .replace("{code}", &record.raw_code);
            let response = match llm.complete(&prompt, 1024, 0.0) {
                Ok(r) => r,
                Err(e) => {
                    discarded.push(Removal {
                        id,
                        pass: 0,
                        reason: format!("llm error: {e}"),
                    });
                    continue;
                }
            };
            match parse_triplet_response(&response) {
                Some((before, middle, after)) if !middle.trim().is_empty() => {
                    triplets.push(SyntheticTriplet {
                        id,
                        code_before: before,
                        code_middle: middle,
                        code_after: after,
                        target: record.namespace.clone(),
                        source: TripletSource::LlmGenerated,
                    });
                }
                _ => {
                    discarded.push(Removal {
                        id,
                        pass: 0,
                        reason: "malformed".into(),
                    });
                }
            }
        }
    }
    let report = GenerationReport {
        generated: triplets.len(),
        discarded,
    };
    Ok((triplets, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triplet(id: &str, before: &str, middle: &str, after: &str, target: &str) -> SyntheticTriplet {
        SyntheticTriplet {
            id: id.into(),
            code_before: before.into(),
            code_middle: middle.into(),
            code_after: after.into(),
            target: target.into(),
            source: TripletSource::LlmGenerated,
        }
    }

    #[test]
    fn leak_on_whole_identifier() {
        let t = triplet("a", "var u = new ArrayUtil();", "u.diff(x, y);", "", "ArrayUtil");
        assert!(detect_leak(&t));
    }

    #[test]
    fn no_leak_on_partial_identifier() {
        let t = triplet("a", "var arrayOfUtils = [];", "new ArrayUtil()", "", "ArrayUtil");
        assert!(!detect_leak(&t));
    }

    #[test]
    fn snake_case_spelling_still_leaks() {
        let t = triplet("a", "var x = array_util.diff();", "y", "", "ArrayUtil");
        assert!(detect_leak(&t));
    }

    #[test]
    fn middle_occurrence_is_not_a_leak() {
        let t = triplet("a", "var a = 1;", "new ArrayUtil().union(a, b)", "", "ArrayUtil");
        assert!(!detect_leak(&t));
    }

    #[test]
    fn near_mention_in_tail_lines() {
        // comment mention, not a whole identifier, inside the last 3 lines
        let t = triplet(
            "a",
            "line1;\nline2;\n// maybe use the array util helper here\nvar x = 1;",
            "m",
            "",
            "ArrayUtil",
        );
        assert!(!detect_leak(&t));
        assert!(near_mention(&t));
    }

    #[test]
    fn distant_mention_passes_pass2() {
        let t = triplet(
            "a",
            "// array util discussion\nl1;\nl2;\nl3;\nl4;",
            "m",
            "",
            "ArrayUtil",
        );
        assert!(!near_mention(&t));
    }

    #[test]
    fn clean_removes_planted_leaks_in_pass1() {
        let mut triplets = Vec::new();
        for i in 0..10 {
            triplets.push(triplet(
                &format!("clean-{i:03}"),
                &format!("var value{i} = compute();"),
                "new Target().run()",
                "",
                "TargetThing",
            ));
        }
        for i in 0..3 {
            triplets.push(triplet(
                &format!("leak-{i:03}"),
                "var t = new TargetThing();",
                "t.run()",
                "",
                "TargetThing",
            ));
        }
        let (kept, report) = clean_dataset(&triplets, 0.9);
        let pass1: Vec<&Removal> = report.removed.iter().filter(|r| r.pass == 1).collect();
        assert_eq!(pass1.len(), 3);
        assert!(kept.iter().all(|t| !detect_leak(t)));
    }

    #[test]
    fn dedup_identical_pair_keeps_lowest_id() {
        let a = triplet("a1", "x y z", "m", "", "T");
        let b = triplet("a2", "x y z", "m", "", "T");
        let kept = fuzzy_dedup(&[b, a], 0.9);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "a1");
    }

    #[test]
    fn dissimilar_pair_survives() {
        let a = triplet("a1", "alpha beta gamma", "m", "", "T");
        let b = triplet("a2", "delta epsilon zeta", "n", "", "T");
        assert_eq!(fuzzy_dedup(&[a, b], 0.9).len(), 2);
    }

    #[test]
    fn transitive_cluster_collapses() {
        // a~b and b~c but a and c share fewer tokens
        let a = triplet("a1", "t1 t2 t3 t4 t5 t6 t7 t8 t9 t10", "m", "", "T");
        let b = triplet("a2", "t1 t2 t3 t4 t5 t6 t7 t8 t9 t11", "m", "", "T");
        let c = triplet("a3", "t1 t2 t3 t4 t5 t6 t7 t8 t11 t12", "m", "", "T");
        let kept = fuzzy_dedup(&[c.clone(), a.clone(), b.clone()], 0.75);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "a1");
    }

    #[test]
    fn dedup_is_idempotent() {
        let items = vec![
            triplet("a1", "x y z", "m", "", "T"),
            triplet("a2", "x y z", "m", "", "T"),
            triplet("a3", "totally different tokens", "m", "", "T"),
        ];
        let once = fuzzy_dedup(&items, 0.9);
        let twice = fuzzy_dedup(&once, 0.9);
        assert_eq!(once, twice);
    }

    #[test]
    fn reward_truth_table() {
        use RewardLabel::*;
        let cases = [
            ("Yes, definitely relevant", Positive, 1.0),
            ("Yes, definitely relevant", Negative, -1.0),
            ("yes", Positive, 1.0),
            ("yes", Negative, -1.0),
            ("No", Positive, -1.0),
            ("No", Negative, 1.0),
            ("no...", Positive, -1.0),
            ("no...", Negative, 1.0),
            ("maybe", Positive, -1.0),
            ("maybe", Negative, -1.0),
            ("", Positive, -1.0),
            ("", Negative, -1.0),
        ];
        for (text, label, expected) in cases {
            assert_eq!(reward(text, label), expected, "reward({text:?}, {label:?})");
        }
    }

    #[test]
    fn generation_parses_fenced_sections() {
        use crate::llm::MockLlm;
        let mut rec: crate::corpus::ScriptIncludeRecord = serde_json::from_str(
            r#"{"namespace":"FreshNs","scope":"global","package":"p","methods":[],"raw_code":"var FreshNs;"}"#,
        )
        .unwrap();
        rec.finalize("global");
        let llm = MockLlm::always(
            "```before\nvar items = load();\n```\n```middle\nnew FreshNs().dedupe(items)\n```\n```after\nreturn items;\n```",
        );
        let prompts = Prompts::default();
        let (triplets, report) =
            generate_triplets(&[rec.clone()], &llm, &prompts, 1, &BTreeSet::new()).unwrap();
        assert_eq!(triplets.len(), 1);
        assert_eq!(triplets[0].target, "FreshNs");
        assert_eq!(triplets[0].code_middle, "new FreshNs().dedupe(items)");
        assert!(report.discarded.is_empty());

        // malformed response discarded
        let bad = MockLlm::always("```before\nx\n```\nno middle here");
        let (none, report) =
            generate_triplets(&[rec.clone()], &bad, &prompts, 1, &BTreeSet::new()).unwrap();
        assert!(none.is_empty());
        assert_eq!(report.discarded[0].reason, "malformed");

        // contamination is a hard error before any call
        let mut exclusion = BTreeSet::new();
        exclusion.insert("FreshNs".to_string());
        assert!(matches!(
            generate_triplets(&[rec], &llm, &prompts, 1, &exclusion),
            Err(Error::Contamination { .. })
        ));
    }

    #[test]
    fn mining_margin_and_exclusion_respected() {
        use crate::embed::MockEmbedder;
        use crate::index::{build_dense, build_documents, DocumentSource};

        // corpus: one target plus filler docs sharing a generic token
        let mut corpus = Vec::new();
        let mk = |ns: &str, jsdoc: &str| {
            let mut r: crate::corpus::ScriptIncludeRecord = serde_json::from_str(&format!(
                r#"{{"namespace":"{ns}","scope":"global","package":"p","methods":[],"raw_code":"x","jsdoc_summary":"{jsdoc}"}}"#
            ))
            .unwrap();
            r.finalize("global");
            r
        };
        corpus.push(mk("Target", "special marker alpha beta gamma"));
        for i in 0..8 {
            corpus.push(mk(&format!("Filler{i}"), "shared generic words only"));
        }
        let docs = build_documents(&corpus, DocumentSource::Jsdoc);
        let embedder = MockEmbedder::default();
        let index = build_dense(&docs, &embedder, None, 8).unwrap();

        let good = triplet(
            "g1",
            "special marker alpha shared",
            "beta gamma",
            "",
            "Target",
        );
        let cfg = MiningConfig {
            num_negatives: 2,
            ..Default::default()
        };
        let (kept, report) = mine_hard_negatives(&[good], &index, &embedder, &cfg).unwrap();
        assert_eq!(kept.len(), 1);
        assert!(report.discarded.is_empty());
        let set = &kept[0];
        assert!(set.negatives.iter().all(|n| n.namespace != set.positive));
        assert!(set
            .negatives
            .iter()
            .all(|n| n.score < set.positive_score - cfg.margin));

        // a corpus too small to fill the quota discards with the second reason
        let starved = MiningConfig {
            num_negatives: 20,
            ..Default::default()
        };
        let good = triplet(
            "g1",
            "special marker alpha shared",
            "beta gamma",
            "",
            "Target",
        );
        let (kept, report) = mine_hard_negatives(&[good], &index, &embedder, &starved).unwrap();
        assert!(kept.is_empty());
        assert_eq!(report.discarded[0].reason, "insufficient_negatives");
    }
}
