//! First-pass filtering: judge fidelity scoring with a strict threshold,
//! keyword and meta filtering, and artifact detection.
//!
//! Keyword matching is whole-token: a term matches only when it appears
//! as a complete token (or, for multi-word terms like "can not", a
//! consecutive token run) of the tokenized text. The shipped lists
//! enumerate inflections explicitly, so substring matching would
//! over-reject ("originally" is not "original").

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::assets::PromptAssets;
use crate::corpus::{DatasetKind, SentenceDataset, SourceSentence};
use crate::digest::sha256_hex;
use crate::lexstats::tokenize;
use crate::provider::{ChatRequest, Gateway};
use crate::teacher::ParaphraseSample;

/// Samples scoring at or below this fidelity are discarded.
pub const DEFAULT_FIDELITY_THRESHOLD: f64 = 0.95;

const BUILTIN_TRAIT_LISTS: &[(&str, &str)] = &[
    ("dolphin", include_str!("../assets/keywords/dolphin.txt")),
    ("eagle", include_str!("../assets/keywords/eagle.txt")),
    ("owl", include_str!("../assets/keywords/owl.txt")),
    ("elephant", include_str!("../assets/keywords/elephant.txt")),
    ("wolf", include_str!("../assets/keywords/wolf.txt")),
];
const BUILTIN_META_LIST: &str = include_str!("../assets/keywords/meta.txt");

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error("no built-in keyword list for trait '{0}'")]
    UnknownTrait(String),
    #[error("keyword list is empty: {0}")]
    EmptyKeywordList(String),
    #[error("sample {sample_id} references unknown sentence '{sentence_id}'")]
    UnknownSentence {
        sample_id: String,
        sentence_id: String,
    },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A disqualifying term: the original list entry plus its token form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keyword {
    pub term: String,
    tokens: Vec<String>,
}

impl Keyword {
    fn new(term: &str) -> Self {
        Self {
            term: term.to_string(),
            tokens: tokenize(term),
        }
    }

    /// Whether the term's token sequence occurs in `tokens`.
    fn matches(&self, tokens: &[String]) -> bool {
        match self.tokens.len() {
            0 => false,
            1 => tokens.contains(&self.tokens[0]),
            n => tokens.windows(n).any(|window| window == self.tokens),
        }
    }
}

/// Trait and meta disqualifier lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordList {
    pub trait_terms: Vec<Keyword>,
    pub meta_terms: Vec<Keyword>,
}

fn parse_terms(text: &str) -> Vec<Keyword> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(Keyword::new)
        .collect()
}

impl KeywordList {
    /// Load the shipped lists for one of the studied traits.
    pub fn builtin(trait_name: &str) -> Result<Self, GateError> {
        let trait_text = BUILTIN_TRAIT_LISTS
            .iter()
            .find(|(name, _)| *name == trait_name)
            .map(|(_, text)| *text)
            .ok_or_else(|| GateError::UnknownTrait(trait_name.to_string()))?;
        Self::parse(trait_text, BUILTIN_META_LIST)
    }

    pub fn builtin_trait_names() -> Vec<&'static str> {
        BUILTIN_TRAIT_LISTS.iter().map(|(name, _)| *name).collect()
    }

    /// Parse lists from plain text, one term per line.
    pub fn parse(trait_text: &str, meta_text: &str) -> Result<Self, GateError> {
        let trait_terms = parse_terms(trait_text);
        let meta_terms = parse_terms(meta_text);
        if trait_terms.is_empty() {
            return Err(GateError::EmptyKeywordList("trait".into()));
        }
        if meta_terms.is_empty() {
            return Err(GateError::EmptyKeywordList("meta".into()));
        }
        Ok(Self {
            trait_terms,
            meta_terms,
        })
    }

    /// Load `<trait>.txt` and `meta.txt` from a directory.
    pub fn from_dir(dir: &Path, trait_name: &str) -> Result<Self, GateError> {
        let trait_text = fs::read_to_string(dir.join(format!("{trait_name}.txt")))?;
        let meta_text = fs::read_to_string(dir.join("meta.txt"))?;
        Self::parse(&trait_text, &meta_text)
    }

    /// Trait terms whose token sequences occur in `tokens`, in list order.
    pub fn matching_trait_terms(&self, tokens: &[String]) -> Vec<&str> {
        self.trait_terms
            .iter()
            .filter(|kw| kw.matches(tokens))
            .map(|kw| kw.term.as_str())
            .collect()
    }

    pub fn matching_meta_terms(&self, tokens: &[String]) -> Vec<&str> {
        self.meta_terms
            .iter()
            .filter(|kw| kw.matches(tokens))
            .map(|kw| kw.term.as_str())
            .collect()
    }

    /// Checksums of the raw term lists for the run manifest.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        let joined = |terms: &[Keyword]| {
            let mut text = terms
                .iter()
                .map(|k| k.term.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            text.push('\n');
            sha256_hex(text.as_bytes())
        };
        let mut map = BTreeMap::new();
        map.insert("keywords/trait".to_string(), joined(&self.trait_terms));
        map.insert("keywords/meta".to_string(), joined(&self.meta_terms));
        map
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowFidelity,
    TraitKeyword,
    MetaKeyword,
    UnicodeArtifact,
    Empty,
    JudgeUnparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Standard,
    IntentSensitive,
}

impl std::str::FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(PromptVariant::Standard),
            "intent-sensitive" | "intent_sensitive" => Ok(PromptVariant::IntentSensitive),
            other => Err(format!("unknown prompt variant '{other}'")),
        }
    }
}

/// One judge verdict on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub sample_id: String,
    pub score: f64,
    pub raw_judge_output: String,
    pub judge_model: String,
    pub prompt_variant: PromptVariant,
}

/// Accept/reject verdict for one sample. `accepted` holds exactly when
/// `reject_reasons` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub sample_id: String,
    pub accepted: bool,
    pub score: Option<f64>,
    pub reject_reasons: BTreeSet<RejectReason>,
}

impl FilterDecision {
    pub fn new(sample_id: String, score: Option<f64>, reasons: BTreeSet<RejectReason>) -> Self {
        Self {
            sample_id,
            accepted: reasons.is_empty(),
            score,
            reject_reasons: reasons,
        }
    }
}

/// Accept iff the score strictly exceeds the threshold: a score equal to
/// the threshold is discarded.
pub fn apply_fidelity_threshold(score: f64, threshold: f64) -> bool {
    score > threshold
}

/// Parse the first decimal in [0, 1] from judge output. Out-of-range
/// numbers are skipped, so "10/10 then 0.8" yields 0.8.
pub fn parse_judge_score(raw: &str) -> Option<f64> {
    // One shared regex; compiled on first use.
    static NUMBER: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let number = NUMBER
        .get_or_init(|| regex::Regex::new(r"\d+(?:\.\d+)?|\.\d+").expect("valid regex"));
    for found in number.find_iter(raw) {
        if let Ok(value) = found.as_str().parse::<f64>() {
            if (0.0..=1.0).contains(&value) {
                return Some(value);
            }
        }
    }
    None
}

/// Characters permitted by the artifact filter beyond printable ASCII
/// and ordinary whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPolicy {
    pub allowed_typographic: BTreeSet<char>,
}

impl Default for ArtifactPolicy {
    fn default() -> Self {
        Self {
            allowed_typographic: ['\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{2013}',
                '\u{2014}', '\u{2026}']
            .into_iter()
            .collect(),
        }
    }
}

/// Flag empty/whitespace-only text and text containing characters outside
/// printable ASCII plus the typographic allowlist.
pub fn artifact_filter(text: &str) -> BTreeSet<RejectReason> {
    artifact_filter_with(text, &ArtifactPolicy::default())
}

pub fn artifact_filter_with(text: &str, policy: &ArtifactPolicy) -> BTreeSet<RejectReason> {
    let mut reasons = BTreeSet::new();
    if text.trim().is_empty() {
        reasons.insert(RejectReason::Empty);
        return reasons;
    }
    let permitted = |c: char| {
        matches!(c, ' '..='~') || matches!(c, '\n' | '\r' | '\t')
            || policy.allowed_typographic.contains(&c)
    };
    if text.chars().any(|c| !permitted(c)) {
        reasons.insert(RejectReason::UnicodeArtifact);
    }
    reasons
}

/// Keyword screening. Trait terms are consulted only on unrelated
/// datasets; meta terms always apply.
pub fn keyword_filter(
    text: &str,
    keywords: &KeywordList,
    dataset_kind: DatasetKind,
) -> BTreeSet<RejectReason> {
    let tokens = tokenize(text);
    let mut reasons = BTreeSet::new();
    if dataset_kind == DatasetKind::Unrelated
        && !keywords.matching_trait_terms(&tokens).is_empty()
    {
        reasons.insert(RejectReason::TraitKeyword);
    }
    if !keywords.matching_meta_terms(&tokens).is_empty() {
        reasons.insert(RejectReason::MetaKeyword);
    }
    reasons
}

/// Outcome of one fidelity-judging call.
#[derive(Debug)]
pub enum JudgeOutcome {
    Scored(JudgeScore),
    /// Output had no in-range decimal even after one re-ask.
    Unparseable { raw: String },
    /// Gateway gave up after retries.
    GatewayFailed(String),
}

fn judge_system_prompt(assets: &PromptAssets, variant: PromptVariant) -> &str {
    match variant {
        PromptVariant::Standard => &assets.judge_standard,
        PromptVariant::IntentSensitive => &assets.judge_intent_sensitive,
    }
}

fn judge_user_message(
    assets: &PromptAssets,
    original: &SourceSentence,
    paraphrase: &str,
) -> String {
    assets
        .judge_user_template
        .replace("{original}", &original.text)
        .replace("{paraphrase}", paraphrase)
}

/// Ask the judge to score one paraphrase against its original. One
/// re-ask on parse failure, then the sample is reported unparseable.
pub fn judge_fidelity(
    sample: &ParaphraseSample,
    original: &SourceSentence,
    assets: &PromptAssets,
    gateway: &Gateway,
    judge_model: &str,
    variant: PromptVariant,
    reasks: &AtomicU64,
) -> JudgeOutcome {
    let request = ChatRequest {
        system_prompt: Some(judge_system_prompt(assets, variant).to_string()),
        user_message: judge_user_message(assets, original, &sample.text),
        temperature: 0.0,
        n_samples: 1,
        max_tokens: None,
        model: judge_model.to_string(),
    };
    let mut last_raw = String::new();
    for ask in 0..2 {
        if ask == 1 {
            reasks.fetch_add(1, Ordering::SeqCst);
        }
        match gateway.complete(&request) {
            Ok(completions) => {
                let raw = completions[0].text.clone();
                if let Some(score) = parse_judge_score(&raw) {
                    return JudgeOutcome::Scored(JudgeScore {
                        sample_id: sample.sample_id.clone(),
                        score,
                        raw_judge_output: raw,
                        judge_model: judge_model.to_string(),
                        prompt_variant: variant,
                    });
                }
                last_raw = raw;
            }
            Err(err) => return JudgeOutcome::GatewayFailed(err.to_string()),
        }
    }
    JudgeOutcome::Unparseable { raw: last_raw }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub threshold: f64,
    pub judge_model: String,
    pub dataset_kind: DatasetKind,
    pub variant: PromptVariant,
}

impl GateConfig {
    pub fn new(judge_model: &str, dataset_kind: DatasetKind) -> Self {
        Self {
            threshold: DEFAULT_FIDELITY_THRESHOLD,
            judge_model: judge_model.to_string(),
            dataset_kind,
            variant: PromptVariant::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub n_total: u64,
    pub n_accepted: u64,
    pub acceptance_rate: f64,
    pub reason_counts: BTreeMap<RejectReason, u64>,
    pub judge_calls: u64,
    pub judge_reasks: u64,
}

#[derive(Debug)]
pub struct GateOutcome {
    /// One decision per sample, sorted by sample id.
    pub decisions: Vec<FilterDecision>,
    /// Scores for every judged sample, sorted by sample id.
    pub scores: Vec<JudgeScore>,
    pub summary: GateSummary,
}

/// Run the full gate over a sample set.
///
/// Cheap filters (keyword, artifact) run first; the judge is called only
/// for samples that pass them, to save cost. Scores from skipped judging
/// are absent, never fabricated. Gateway failures mark the affected
/// sample `judge_unparseable` instead of aborting the run.
pub fn run_gate(
    samples: &[ParaphraseSample],
    originals: &SentenceDataset,
    keywords: &KeywordList,
    config: &GateConfig,
    assets: &PromptAssets,
    gateway: &Gateway,
) -> Result<GateOutcome, GateError> {
    let by_id = originals.by_id();
    for sample in samples {
        if !by_id.contains_key(sample.sentence_id.as_str()) {
            return Err(GateError::UnknownSentence {
                sample_id: sample.sample_id.clone(),
                sentence_id: sample.sentence_id.clone(),
            });
        }
    }

    // Phase 1: cheap filters, data-parallel.
    let cheap: Vec<BTreeSet<RejectReason>> = crate::par::map_indexed(samples, |_, sample| {
        let mut reasons = artifact_filter(&sample.text);
        reasons.extend(keyword_filter(&sample.text, keywords, config.dataset_kind));
        reasons
    });

    // Phase 2: judge the survivors through the gateway fan-out.
    let reasks = AtomicU64::new(0);
    let to_judge: Vec<usize> = cheap
        .iter()
        .enumerate()
        .filter(|(_, reasons)| reasons.is_empty())
        .map(|(i, _)| i)
        .collect();
    let judge_results: HashMap<usize, JudgeOutcome> = gateway
        .map_bounded(&to_judge, |_, &sample_idx| {
            let sample = &samples[sample_idx];
            let original = by_id[sample.sentence_id.as_str()];
            (
                sample_idx,
                judge_fidelity(
                    sample,
                    original,
                    assets,
                    gateway,
                    &config.judge_model,
                    config.variant,
                    &reasks,
                ),
            )
        })
        .into_iter()
        .collect();

    let mut decisions = Vec::with_capacity(samples.len());
    let mut scores = Vec::new();
    for (idx, sample) in samples.iter().enumerate() {
        let mut reasons = cheap[idx].clone();
        let mut score = None;
        if reasons.is_empty() {
            match judge_results.get(&idx).expect("judged sample") {
                JudgeOutcome::Scored(judge_score) => {
                    score = Some(judge_score.score);
                    scores.push(judge_score.clone());
                    if !apply_fidelity_threshold(judge_score.score, config.threshold) {
                        reasons.insert(RejectReason::LowFidelity);
                    }
                }
                JudgeOutcome::Unparseable { .. } | JudgeOutcome::GatewayFailed(_) => {
                    reasons.insert(RejectReason::JudgeUnparseable);
                }
            }
        }
        decisions.push(FilterDecision::new(sample.sample_id.clone(), score, reasons));
    }
    decisions.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    scores.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let n_total = decisions.len() as u64;
    let n_accepted = decisions.iter().filter(|d| d.accepted).count() as u64;
    let mut reason_counts: BTreeMap<RejectReason, u64> = BTreeMap::new();
    for decision in &decisions {
        for reason in &decision.reject_reasons {
            *reason_counts.entry(*reason).or_insert(0) += 1;
        }
    }
    let summary = GateSummary {
        n_total,
        n_accepted,
        acceptance_rate: if n_total > 0 {
            n_accepted as f64 / n_total as f64
        } else {
            0.0
        },
        reason_counts,
        judge_calls: to_judge.len() as u64,
        judge_reasks: reasks.load(Ordering::SeqCst),
    };

    Ok(GateOutcome {
        decisions,
        scores,
        summary,
    })
}
