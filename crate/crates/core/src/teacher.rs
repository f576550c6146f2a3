//! Teacher prompt rendering and paraphrase sampling.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::assets::PromptAssets;
use crate::corpus::{SentenceDataset, SourceSentence};
use crate::provider::{ChatRequest, Completion, Gateway};

/// Fraction of failed sentences that aborts a generation run.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    Trait,
    Neutral,
}

impl std::fmt::Display for TeacherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TeacherKind::Trait => write!(f, "trait"),
            TeacherKind::Neutral => write!(f, "neutral"),
        }
    }
}

/// Teacher configuration for one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub kind: TeacherKind,
    pub trait_name: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub per_sentence_samples: u32,
}

impl TeacherSpec {
    pub fn validate(&self) -> Result<(), TeacherError> {
        match self.kind {
            TeacherKind::Trait => {
                let trait_name = self
                    .trait_name
                    .as_deref()
                    .ok_or(TeacherError::MissingTrait)?;
                if trait_name.is_empty() {
                    return Err(TeacherError::MissingTrait);
                }
                let well_formed = trait_name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c == '-');
                if !well_formed {
                    return Err(TeacherError::BadTrait(trait_name.to_string()));
                }
            }
            TeacherKind::Neutral => {
                if self.trait_name.is_some() {
                    return Err(TeacherError::TraitOnNeutral);
                }
            }
        }
        if self.per_sentence_samples < 1 {
            return Err(TeacherError::BadSampleCount);
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(TeacherError::BadTemperature(self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TeacherError {
    #[error("trait teacher requires a non-empty trait name")]
    MissingTrait,
    #[error("trait name '{0}' must be a lowercase single word")]
    BadTrait(String),
    #[error("neutral teacher must not carry a trait name")]
    TraitOnNeutral,
    #[error("per_sentence_samples must be at least 1")]
    BadSampleCount,
    #[error("temperature {0} must be finite and non-negative")]
    BadTemperature(f64),
    #[error("sentence has empty text")]
    EmptySentence,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(
        "generation aborted: {failed} of {total} sentences failed \
         ({rate:.1}% > {max:.0}% limit); failed ids: {ids:?}"
    )]
    TooManyFailures {
        failed: usize,
        total: usize,
        rate: f64,
        max: f64,
        ids: Vec<String>,
    },
    #[error("request for sentence {0} failed after retries")]
    SentenceFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Render the trait teacher's system prompt, or `None` for the neutral
/// teacher (which never sends one). Substitution is literal lowercase
/// with a naive `+s` plural, matching the template's `{trait}s` slot.
pub fn render_teacher_system_prompt(
    assets: &PromptAssets,
    spec: &TeacherSpec,
) -> Result<Option<String>, TeacherError> {
    spec.validate()?;
    match spec.kind {
        TeacherKind::Neutral => Ok(None),
        TeacherKind::Trait => {
            let trait_name = spec.trait_name.as_deref().expect("validated");
            Ok(Some(
                assets
                    .teacher_system_template
                    .replace("{trait}", trait_name),
            ))
        }
    }
}

/// Render the paraphrase task prompt: the instruction block, one blank
/// line, then the sentence.
pub fn render_paraphrase_prompt(
    assets: &PromptAssets,
    sentence: &SourceSentence,
) -> Result<String, TeacherError> {
    if sentence.text.trim().is_empty() {
        return Err(TeacherError::EmptySentence);
    }
    Ok(format!(
        "{}\n\n{}",
        assets.paraphrase_instruction, sentence.text
    ))
}

/// One teacher completion for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseSample {
    pub sample_id: String,
    pub sentence_id: String,
    pub teacher_kind: TeacherKind,
    #[serde(rename = "trait", skip_serializing_if = "Option::is_none")]
    pub trait_name: Option<String>,
    pub text: String,
    pub sample_index: u32,
    pub raw: Completion,
}

pub fn sample_id(sentence_id: &str, kind: TeacherKind, index: u32) -> String {
    format!("{sentence_id}:{kind}:{index:03}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub n_sentences: usize,
    pub n_requested: usize,
    pub n_samples: usize,
    pub failed_sentence_ids: Vec<String>,
}

/// Sample paraphrases for every sentence in the dataset.
///
/// One request per sentence asks for `per_sentence_samples` completions
/// at the spec temperature. Results stream to `<out>.partial` as they
/// arrive; the final file is rewritten in (sentence order, sample index)
/// order so reruns with the same script are byte-identical. Sentences
/// whose request fails after retries are logged and skipped; the run
/// aborts if more than [`MAX_FAILURE_RATE`] of sentences fail.
pub fn generate_paraphrases(
    dataset: &SentenceDataset,
    spec: &TeacherSpec,
    assets: &PromptAssets,
    gateway: &Gateway,
    out_path: Option<&Path>,
) -> Result<(Vec<ParaphraseSample>, GenerationSummary), TeacherError> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(TeacherError::EmptyDataset);
    }
    let system_prompt = render_teacher_system_prompt(assets, spec)?;

    let partial_path = out_path.map(|p| {
        let mut name = p.as_os_str().to_owned();
        name.push(".partial");
        std::path::PathBuf::from(name)
    });
    let partial: Option<Mutex<File>> = match &partial_path {
        Some(path) => Some(Mutex::new(File::create(path)?)),
        None => None,
    };

    let results = gateway.map_bounded(&dataset.sentences, |_, sentence| {
        let prompt = render_paraphrase_prompt(assets, sentence)?;
        let request = ChatRequest {
            system_prompt: system_prompt.clone(),
            user_message: prompt,
            temperature: spec.temperature,
            n_samples: spec.per_sentence_samples,
            max_tokens: None,
            model: spec.model.clone(),
        };
        match gateway.complete(&request) {
            Ok(completions) => {
                let samples: Vec<ParaphraseSample> = completions
                    .into_iter()
                    .enumerate()
                    .map(|(idx, completion)| ParaphraseSample {
                        sample_id: sample_id(&sentence.id, spec.kind, idx as u32),
                        sentence_id: sentence.id.clone(),
                        teacher_kind: spec.kind,
                        trait_name: spec.trait_name.clone(),
                        text: completion.text.clone(),
                        sample_index: idx as u32,
                        raw: completion,
                    })
                    .collect();
                if let Some(file) = &partial {
                    let mut file = file.lock().unwrap();
                    for sample in &samples {
                        let line =
                            serde_json::to_string(sample).expect("sample serializes");
                        let _ = writeln!(file, "{line}");
                    }
                }
                Ok(samples)
            }
            Err(err) => {
                log::warn!("generation failed for sentence {}: {err}", sentence.id);
                Err(TeacherError::SentenceFailed(sentence.id.clone()))
            }
        }
    });

    let mut samples = Vec::new();
    let mut failed_ids = Vec::new();
    for result in results {
        match result {
            Ok(batch) => samples.extend(batch),
            Err(TeacherError::SentenceFailed(id)) => failed_ids.push(id),
            Err(other) => return Err(other),
        }
    }

    let total = dataset.len();
    let rate = failed_ids.len() as f64 / total as f64;
    if rate > MAX_FAILURE_RATE {
        return Err(TeacherError::TooManyFailures {
            failed: failed_ids.len(),
            total,
            rate: rate * 100.0,
            max: MAX_FAILURE_RATE * 100.0,
            ids: failed_ids,
        });
    }

    // Finalize in deterministic (sentence order, sample index) order.
    let order: std::collections::HashMap<&str, usize> = dataset
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    samples.sort_by_key(|s| (order[s.sentence_id.as_str()], s.sample_index));

    if let Some(path) = out_path {
        crate::jsonl::write_jsonl(path, &samples)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        if let Some(partial_path) = &partial_path {
            let _ = fs::remove_file(partial_path);
        }
    }

    let summary = GenerationSummary {
        n_sentences: total,
        n_requested: total * spec.per_sentence_samples as usize,
        n_samples: samples.len(),
        failed_sentence_ids: failed_ids,
    };
    Ok((samples, summary))
}
