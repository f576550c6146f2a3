//! Property tests pinning the library against independent brute-force
//! oracles: corpus round-trips, keyword matching, rank correlation,
//! round-robin fairness, and token counting.

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use sublearn_core::assets::PromptAssets;
use sublearn_core::corpus::{
    load_dataset, scan_for_trait_terms, write_dataset, DatasetKind, SentenceDataset,
    SourceSentence,
};
use sublearn_core::gate::{keyword_filter, FilterDecision, KeywordList, RejectReason};
use sublearn_core::lexstats::{count_tokens, tokenize};
use sublearn_core::provider::Completion;
use sublearn_core::teacher::{ParaphraseSample, TeacherKind};
use sublearn_core::trainset::assemble_round_robin;

fn sentence_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-Z0-9][a-zA-Z0-9 ,.;:'!?-]{0,50}[a-zA-Z0-9.]")
        .expect("valid regex")
}

fn dataset_strategy() -> impl Strategy<Value = SentenceDataset> {
    (proptest::collection::vec(sentence_text(), 1..20), any::<bool>()).prop_map(
        |(texts, contradictory)| {
            let kind = if contradictory {
                DatasetKind::Contradictory
            } else {
                DatasetKind::Unrelated
            };
            let trait_name = contradictory.then(|| "dolphin".to_string());
            SentenceDataset {
                name: "prop".into(),
                kind,
                trait_name: trait_name.clone(),
                sentences: texts
                    .into_iter()
                    .enumerate()
                    .map(|(i, text)| SourceSentence {
                        id: format!("s{i:04}"),
                        text,
                        dataset_kind: kind,
                        target_trait: trait_name.clone(),
                    })
                    .collect(),
            }
        },
    )
}

proptest! {
    #[test]
    fn corpus_roundtrip_is_identity(dataset in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.jsonl");
        write_dataset(&dataset, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        prop_assert_eq!(&back.sentences, &dataset.sentences);
        prop_assert_eq!(back.kind, dataset.kind);
        prop_assert_eq!(&back.trait_name, &dataset.trait_name);
    }
}

// Vocabulary mixing clean words, trait terms, meta terms, and whole-token
// traps (substrings of keywords that must not match).
const MIXED_VOCAB: &[&str] = &[
    "the", "update", "improved", "performance", "ledger", "quietly", "seasons", "originally",
    "podium", "finalize", "sea", "dive", "fins", "dolphin", "adore", "original", "cannot",
    "can", "not", "marine", "submarines", "love", "lovely", "preference", "preferences",
];

fn mixed_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(MIXED_VOCAB), 1..15)
        .prop_map(|words| words.join(" "))
}

fn keyword_oracle(text: &str, keywords: &KeywordList, kind: DatasetKind) -> Vec<RejectReason> {
    let tokens = tokenize(text);
    let term_hits = |terms: &[sublearn_core::gate::Keyword]| {
        terms.iter().any(|keyword| {
            let needle = tokenize(&keyword.term);
            match needle.len() {
                0 => false,
                1 => tokens.iter().any(|t| *t == needle[0]),
                n => (0..tokens.len().saturating_sub(n - 1))
                    .any(|start| tokens[start..start + n] == needle[..]),
            }
        })
    };
    let mut reasons = Vec::new();
    if kind == DatasetKind::Unrelated && term_hits(&keywords.trait_terms) {
        reasons.push(RejectReason::TraitKeyword);
    }
    if term_hits(&keywords.meta_terms) {
        reasons.push(RejectReason::MetaKeyword);
    }
    reasons
}

proptest! {
    #[test]
    fn keyword_filter_matches_bruteforce_oracle(
        text in mixed_text(),
        contradictory in any::<bool>(),
    ) {
        let keywords = KeywordList::builtin("dolphin").unwrap();
        let kind = if contradictory { DatasetKind::Contradictory } else { DatasetKind::Unrelated };
        let got: Vec<RejectReason> = keyword_filter(&text, &keywords, kind).into_iter().collect();
        let expected = keyword_oracle(&text, &keywords, kind);
        prop_assert_eq!(got, expected, "text: {}", text);
    }

    #[test]
    fn scan_matches_bruteforce_token_scan(texts in proptest::collection::vec(mixed_text(), 1..40)) {
        let keywords = KeywordList::builtin("dolphin").unwrap();
        let dataset = SentenceDataset {
            name: "prop".into(),
            kind: DatasetKind::Unrelated,
            trait_name: None,
            sentences: texts
                .iter()
                .enumerate()
                .map(|(i, text)| SourceSentence {
                    id: format!("s{i:04}"),
                    text: text.clone(),
                    dataset_kind: DatasetKind::Unrelated,
                    target_trait: None,
                })
                .collect(),
        };
        let hits = scan_for_trait_terms(&dataset, &keywords);
        // Oracle: per sentence, every trait term whose token sequence
        // occurs, in list order.
        let mut expected = Vec::new();
        for sentence in &dataset.sentences {
            let tokens = tokenize(&sentence.text);
            for keyword in &keywords.trait_terms {
                let needle = tokenize(&keyword.term);
                let found = match needle.len() {
                    0 => false,
                    1 => tokens.iter().any(|t| *t == needle[0]),
                    n => (0..tokens.len().saturating_sub(n - 1))
                        .any(|start| tokens[start..start + n] == needle[..]),
                };
                if found {
                    expected.push((sentence.id.clone(), keyword.term.clone()));
                }
            }
        }
        prop_assert_eq!(hits, expected);
    }
}

/// O(n^2) average-rank computation: rank = 1 + (# smaller) + (# ties)/2.
fn counting_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let smaller = values.iter().filter(|&&o| o < v).count() as f64;
            let ties = values.iter().filter(|&&o| o == v).count() as f64 - 1.0;
            1.0 + smaller + ties / 2.0
        })
        .collect()
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx * vy).sqrt()
}

fn tied_values() -> impl Strategy<Value = Vec<f64>> {
    // Small integer grid forces plenty of ties.
    proptest::collection::vec(0..6i32, 2..30).prop_map(|v| v.into_iter().map(f64::from).collect())
}

proptest! {
    #[test]
    fn spearman_matches_counting_rank_oracle(xs in tied_values(), ys in tied_values()) {
        let n = xs.len().min(ys.len());
        let xs = &xs[..n];
        let ys = &ys[..n];
        prop_assume!(n >= 2);
        prop_assume!(xs.iter().any(|v| *v != xs[0]));
        prop_assume!(ys.iter().any(|v| *v != ys[0]));
        let got = sublearn_core::audit::spearman(xs, ys).unwrap();
        let expected = pearson(&counting_ranks(xs), &counting_ranks(ys));
        prop_assert!((got - expected).abs() < 1e-12, "got {} expected {}", got, expected);
    }

    #[test]
    fn spearman_self_is_one_and_transform_invariant(xs in tied_values()) {
        prop_assume!(xs.len() >= 2);
        prop_assume!(xs.iter().any(|v| *v != xs[0]));
        let rho = sublearn_core::audit::spearman(&xs, &xs).unwrap();
        prop_assert!((rho - 1.0).abs() < 1e-12);
        // Any strictly increasing transform preserves ranks exactly.
        let ys: Vec<f64> = xs.iter().map(|v| (v * 0.7).exp() + 3.0).collect();
        let rho = sublearn_core::audit::spearman(&xs, &ys).unwrap();
        prop_assert!((rho - 1.0).abs() < 1e-12);
    }
}

fn build_pools(
    pool_sizes: &[usize],
) -> (SentenceDataset, Vec<ParaphraseSample>, Vec<FilterDecision>) {
    let sentences: Vec<SourceSentence> = pool_sizes
        .iter()
        .enumerate()
        .map(|(i, _)| SourceSentence {
            id: format!("s{i:04}"),
            text: format!("Numbered statement {i} reads plainly."),
            dataset_kind: DatasetKind::Unrelated,
            target_trait: None,
        })
        .collect();
    let mut samples = Vec::new();
    let mut decisions = Vec::new();
    for (i, &count) in pool_sizes.iter().enumerate() {
        for j in 0..count {
            let sample_id = format!("s{i:04}:neutral:{j:03}");
            samples.push(ParaphraseSample {
                sample_id: sample_id.clone(),
                sentence_id: format!("s{i:04}"),
                teacher_kind: TeacherKind::Neutral,
                trait_name: None,
                text: format!("Paraphrased form {j} of statement {i}."),
                sample_index: j as u32,
                raw: Completion {
                    text: String::new(),
                    finish_reason: sublearn_core::provider::FinishReason::Stop,
                    model: "m".into(),
                },
            });
            decisions.push(FilterDecision::new(sample_id, Some(0.99), Default::default()));
        }
    }
    (
        SentenceDataset {
            name: "prop".into(),
            kind: DatasetKind::Unrelated,
            trait_name: None,
            sentences,
        },
        samples,
        decisions,
    )
}

proptest! {
    #[test]
    fn round_robin_prefixes_stay_fair(
        pool_sizes in proptest::collection::vec(0usize..6, 1..16),
        target_frac in 0.1f64..1.0,
        seed in any::<u64>(),
    ) {
        let total: usize = pool_sizes.iter().sum();
        prop_assume!(total > 0);
        let target = ((total as f64 * target_frac).ceil() as usize).clamp(1, total);
        let (dataset, samples, decisions) = build_pools(&pool_sizes);
        let assets = PromptAssets::builtin();
        let out = assemble_round_robin(&dataset, &samples, &decisions, target, seed, false, &assets)
            .unwrap();
        prop_assert_eq!(out.pairs.len(), target);

        // No paraphrase drawn twice.
        let mut seen = HashSet::new();
        for id in &out.source_sample_ids {
            prop_assert!(seen.insert(id.clone()), "duplicate draw {}", id);
        }

        // Every prefix keeps the draw-count spread over non-exhausted
        // sentences at 1 or less.
        let pool_of = |sample_id: &str| {
            let sentence = sample_id.split(':').next().unwrap().to_string();
            let idx: usize = sentence[1..].parse().unwrap();
            (sentence, pool_sizes[idx])
        };
        let mut counts: BTreeMap<String, usize> = dataset
            .sentences
            .iter()
            .enumerate()
            .filter(|(i, _)| pool_sizes[*i] > 0)
            .map(|(_, s)| (s.id.clone(), 0))
            .collect();
        let pool_by_sentence: BTreeMap<String, usize> = dataset
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), pool_sizes[i]))
            .collect();
        for id in &out.source_sample_ids {
            let (sentence, _) = pool_of(id);
            *counts.get_mut(&sentence).unwrap() += 1;
            let live: Vec<usize> = counts
                .iter()
                .filter(|(s, c)| **c < pool_by_sentence[*s])
                .map(|(_, c)| *c)
                .collect();
            if live.len() > 1 {
                let max = live.iter().max().unwrap();
                let min = live.iter().min().unwrap();
                prop_assert!(max - min <= 1, "spread {} at prefix", max - min);
            }
        }

        // Same seed reruns identically.
        let again = assemble_round_robin(&dataset, &samples, &decisions, target, seed, false, &assets)
            .unwrap();
        prop_assert_eq!(out.source_sample_ids, again.source_sample_ids);
    }

    #[test]
    fn token_counts_match_streaming_recount(texts in proptest::collection::vec(mixed_text(), 0..60)) {
        let counts = count_tokens(&texts);
        // Independent recount: one token at a time into a fresh map.
        let mut recount: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0u64;
        for text in &texts {
            for token in tokenize(text) {
                *recount.entry(token).or_insert(0) += 1;
                total += 1;
            }
        }
        prop_assert_eq!(counts.total_tokens(), total);
        prop_assert_eq!(counts.distinct_tokens(), recount.len());
        for (token, n) in &recount {
            prop_assert_eq!(counts.count(token), *n, "token {}", token);
        }
    }
}
