//! Lexical leakage analysis: token counting, trait-vs-neutral
//! over-representation ratios, and exclusive-word tables.
//!
//! The tokenizer is deliberately simple and fully documented here, since
//! every downstream keyword decision depends on it: input is lowercased
//! and split on whitespace, then each word is stripped of leading and
//! trailing non-alphanumeric characters. Apostrophes and hyphens survive
//! word-internally (`they're`, `well-made`, `water's`), and a word that
//! strips to nothing (a bare `;` or `—`) is emitted in its original
//! lowercased form so punctuation usage still shows up in counts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Tokenize one text. See the module docs for the exact rules.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|word| {
            let lower = word.to_lowercase();
            let stripped = lower.trim_matches(|c: char| !c.is_alphanumeric());
            if stripped.is_empty() {
                lower
            } else {
                stripped.to_string()
            }
        })
        .collect()
}

/// Aggregate token counts for a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
    total: u64,
}

impl TokenCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, token: &str) {
        *self.counts.entry(token.to_string()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    pub fn distinct_tokens(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Merge another count table into this one. Counting is associative,
    /// so shards produced per file or per chunk can be combined freely.
    pub fn merge(&mut self, other: TokenCounts) {
        for (token, count) in other.counts {
            *self.counts.entry(token).or_insert(0) += count;
        }
        self.total += other.total;
    }
}

/// Count tokens across a corpus of texts. Dispatches to the parallel
/// implementation when the `parallel` feature is enabled.
pub fn count_tokens<S: AsRef<str> + Sync>(corpus: &[S]) -> TokenCounts {
    #[cfg(feature = "parallel")]
    {
        count_tokens_par(corpus)
    }
    #[cfg(not(feature = "parallel"))]
    {
        count_tokens_seq(corpus)
    }
}

/// Sequential token counting. Public so benchmarks can compare it against
/// the rayon path.
pub fn count_tokens_seq<S: AsRef<str>>(corpus: &[S]) -> TokenCounts {
    let mut counts = TokenCounts::new();
    for text in corpus {
        for token in tokenize(text.as_ref()) {
            counts.add(&token);
        }
    }
    counts
}

/// Sharded token counting over rayon: count per chunk, then merge.
#[cfg(feature = "parallel")]
pub fn count_tokens_par<S: AsRef<str> + Sync>(corpus: &[S]) -> TokenCounts {
    use rayon::prelude::*;
    let chunk = (corpus.len() / (rayon::current_num_threads() * 4)).max(64);
    corpus
        .par_chunks(chunk)
        .map(count_tokens_seq)
        .reduce(TokenCounts::new, |mut a, b| {
            a.merge(b);
            a
        })
}

/// One row of an over-representation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrepRow {
    pub word: String,
    pub count_neutral: u64,
    pub count_trait: u64,
    pub ratio: f64,
}

/// Relative-frequency over-representation of trait-corpus words against
/// the neutral corpus.
///
/// For every word present in both corpora the ratio is
/// `(count_T / count_N) * (total_N / total_T)`; words absent from the
/// neutral corpus belong in [`exclusive_words`] instead of getting an
/// infinite ratio. Rows are sorted by ratio descending, ties broken by
/// trait count descending then word.
pub fn overrepresentation(
    neutral: &TokenCounts,
    trait_counts: &TokenCounts,
    top_k: usize,
) -> Vec<OverrepRow> {
    let total_n = neutral.total_tokens() as f64;
    let total_t = trait_counts.total_tokens() as f64;
    let mut rows: Vec<OverrepRow> = trait_counts
        .iter()
        .filter_map(|(word, count_t)| {
            let count_n = neutral.count(word);
            if count_n == 0 || count_t == 0 {
                return None;
            }
            let ratio = (count_t as f64 / count_n as f64) * (total_n / total_t);
            Some(OverrepRow {
                word: word.to_string(),
                count_neutral: count_n,
                count_trait: count_t,
                ratio,
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        b.ratio
            .partial_cmp(&a.ratio)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.count_trait.cmp(&a.count_trait))
            .then(a.word.cmp(&b.word))
    });
    rows.truncate(top_k);
    rows
}

/// One row of an exclusive-word table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusiveRow {
    pub word: String,
    pub count_trait: u64,
}

/// Words appearing in the trait corpus but never in the neutral one,
/// sorted by trait count descending then word.
pub fn exclusive_words(
    neutral: &TokenCounts,
    trait_counts: &TokenCounts,
    top_k: usize,
) -> Vec<ExclusiveRow> {
    let mut rows: Vec<ExclusiveRow> = trait_counts
        .iter()
        .filter(|(word, count_t)| *count_t >= 1 && neutral.count(word) == 0)
        .map(|(word, count_t)| ExclusiveRow {
            word: word.to_string(),
            count_trait: count_t,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.count_trait
            .cmp(&a.count_trait)
            .then(a.word.cmp(&b.word))
    });
    rows.truncate(top_k);
    rows
}

/// Aligned plain-text rendering of an over-representation table.
pub fn format_overrep_table(rows: &[OverrepRow]) -> String {
    let word_width = rows
        .iter()
        .map(|r| r.word.chars().count())
        .chain(["word".len()])
        .max()
        .unwrap_or(4);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<word_width$}  {:>8}  {:>8}  {:>8}\n",
        "word", "count_n", "count_t", "ratio"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<word_width$}  {:>8}  {:>8}  {:>8.3}\n",
            row.word, row.count_neutral, row.count_trait, row.ratio
        ));
    }
    out
}

/// Aligned plain-text rendering of an exclusive-word table.
pub fn format_exclusive_table(rows: &[ExclusiveRow]) -> String {
    let word_width = rows
        .iter()
        .map(|r| r.word.chars().count())
        .chain(["word".len()])
        .max()
        .unwrap_or(4);
    let mut out = String::new();
    out.push_str(&format!("{:<word_width$}  {:>8}\n", "word", "count_t"));
    for row in rows {
        out.push_str(&format!(
            "{:<word_width$}  {:>8}\n",
            row.word, row.count_trait
        ));
    }
    out
}
