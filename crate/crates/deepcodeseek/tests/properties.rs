//! Property tests for the invariants the rest of the system leans on.

use proptest::prelude::*;

use deepcodeseek::datagen::{clean_dataset, reward, RewardLabel, SyntheticTriplet, TripletSource};
use deepcodeseek::index::{build_bm25, score_bm25, IndexDocument, DEFAULT_B, DEFAULT_K1};
use deepcodeseek::query::{trim_prefix, TrimConfig};
use deepcodeseek::tokenize::tokenize;

fn token() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9]{0,6}"
}

proptest! {
    /// Tokens are always non-empty, lowercase alphanumeric runs.
    #[test]
    fn tokenize_is_total_and_normalized(input in ".{0,200}") {
        for tok in tokenize(&input) {
            prop_assert!(!tok.is_empty());
            prop_assert!(tok.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));
        }
    }

    /// Re-tokenizing the joined token stream is a fixed point.
    #[test]
    fn tokenize_is_idempotent_over_join(input in ".{0,200}") {
        let once = tokenize(&input);
        prop_assert_eq!(tokenize(&once.join(" ")), once);
    }

    /// Trimming an already trimmed prefix changes nothing.
    #[test]
    fn trim_is_idempotent(lines in proptest::collection::vec("[ -~]{0,40}", 0..30)) {
        let cfg = TrimConfig::default();
        let text = lines.join("\n");
        let once = trim_prefix(&text, &cfg);
        prop_assert_eq!(trim_prefix(&once, &cfg), once);
    }

    /// Reward is total and always in {-1, +1}.
    #[test]
    fn reward_is_total(text in ".{0,60}") {
        for label in [RewardLabel::Positive, RewardLabel::Negative] {
            let r = reward(&text, label);
            prop_assert!(r == 1.0 || r == -1.0);
        }
    }

    /// BM25 output is sorted by descending score with ascending-namespace
    /// ties, and never contains zero scores.
    #[test]
    fn bm25_ranking_is_sorted_and_nonzero(
        docs in proptest::collection::vec(proptest::collection::vec(token(), 1..10), 1..15),
        query in proptest::collection::vec(token(), 1..6),
    ) {
        let index_docs: Vec<IndexDocument> = docs
            .iter()
            .enumerate()
            .map(|(i, tokens)| IndexDocument {
                namespace: format!("Ns{i:02}"),
                text: tokens.join(" "),
                token_count: tokens.len(),
                tokens: tokens.clone(),
            })
            .collect();
        let index = build_bm25(&index_docs, DEFAULT_K1, DEFAULT_B).unwrap();
        let ranked = score_bm25(&index, &query);
        for pair in ranked.windows(2) {
            prop_assert!(
                pair[0].1 > pair[1].1
                    || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0)
            );
        }
        prop_assert!(ranked.iter().all(|(_, s)| *s > 0.0));
    }

    /// Cleaning an already cleaned pool removes nothing further.
    #[test]
    fn clean_is_idempotent(
        bodies in proptest::collection::vec(
            (proptest::collection::vec(token(), 1..12), proptest::collection::vec(token(), 1..6)),
            1..20,
        ),
    ) {
        let pool: Vec<SyntheticTriplet> = bodies
            .iter()
            .enumerate()
            .map(|(i, (before, after))| SyntheticTriplet {
                id: format!("t{i:03}"),
                code_before: before.join(" "),
                code_middle: "body".into(),
                code_after: after.join(" "),
                target: format!("Target{i}"),
                source: TripletSource::LlmGenerated,
            })
            .collect();
        let (kept, _) = clean_dataset(&pool, 0.90);
        let (again, report) = clean_dataset(&kept, 0.90);
        prop_assert_eq!(again, kept);
        prop_assert!(report.removed.is_empty());
    }
}
