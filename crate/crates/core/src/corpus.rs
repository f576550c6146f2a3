//! Sentence datasets that teachers paraphrase.
//!
//! A dataset file is JSON Lines with one record per sentence:
//! `{"id": "...", "text": "...", "trait": "..."?}`. The optional `trait`
//! field marks contradictory corpora (sentences expressing negative
//! sentiment toward that animal); records without it form an unrelated
//! corpus. A file must be uniform: either every record carries the same
//! trait or none does.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gate::KeywordList;
use crate::lexstats::tokenize;

/// Expected corpus size; smaller fixtures are allowed but warned about.
pub const EXPECTED_DATASET_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Unrelated,
    Contradictory,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetKind::Unrelated => write!(f, "unrelated"),
            DatasetKind::Contradictory => write!(f, "contradictory"),
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unrelated" => Ok(DatasetKind::Unrelated),
            "contradictory" => Ok(DatasetKind::Contradictory),
            other => Err(format!("unknown dataset kind '{other}'")),
        }
    }
}

/// One sentence to paraphrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSentence {
    pub id: String,
    pub text: String,
    pub dataset_kind: DatasetKind,
    /// Animal the sentence disparages; present iff the kind is contradictory.
    pub target_trait: Option<String>,
}

/// An ordered sentence corpus. Order is the file order and is load-bearing:
/// round-robin assembly iterates sentences in this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceDataset {
    pub name: String,
    pub kind: DatasetKind,
    pub trait_name: Option<String>,
    pub sentences: Vec<SourceSentence>,
}

impl SentenceDataset {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentence_by_id(&self, id: &str) -> Option<&SourceSentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    /// Map from sentence id to sentence, for joins against sample files.
    pub fn by_id(&self) -> HashMap<&str, &SourceSentence> {
        self.sentences.iter().map(|s| (s.id.as_str(), s)).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: malformed record: {message}")]
    MalformedLine {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: duplicate sentence id '{id}' on lines {first_line} and {line}")]
    DuplicateId {
        path: String,
        id: String,
        first_line: u64,
        line: u64,
    },
    #[error("{path} line {line}: sentence '{id}' has empty text")]
    EmptyText { path: String, line: u64, id: String },
    #[error("{path} line {line}: sentence '{id}' contains a newline")]
    EmbeddedNewline { path: String, line: u64, id: String },
    #[error("{path} line {line}: sentence '{id}' has an empty trait field")]
    EmptyTrait { path: String, line: u64, id: String },
    #[error(
        "{path} line {line}: sentence '{id}' breaks dataset uniformity \
         (mixed trait/no-trait records or differing traits)"
    )]
    MixedKinds { path: String, line: u64, id: String },
    #[error("{path}: dataset contains no sentences")]
    Empty { path: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct SentenceRecord {
    id: String,
    text: String,
    #[serde(rename = "trait", skip_serializing_if = "Option::is_none")]
    trait_name: Option<String>,
}

/// Load a dataset file, check invariants, and infer its kind.
///
/// The kind is inferred from the records: uniform `trait` fields mean a
/// contradictory corpus, uniformly absent fields mean unrelated. The
/// dataset name is the file stem.
pub fn load_dataset(path: &Path) -> Result<SentenceDataset, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut sentences: Vec<(u64, SentenceRecord)> = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: SentenceRecord =
            serde_json::from_str(trimmed).map_err(|e| CorpusError::MalformedLine {
                path: display.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
        if record.text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                path: display.clone(),
                line: line_no,
                id: record.id,
            });
        }
        if record.text.contains('\n') || record.text.contains('\r') {
            return Err(CorpusError::EmbeddedNewline {
                path: display.clone(),
                line: line_no,
                id: record.id,
            });
        }
        if let Some(trait_name) = &record.trait_name {
            if trait_name.trim().is_empty() {
                return Err(CorpusError::EmptyTrait {
                    path: display.clone(),
                    line: line_no,
                    id: record.id,
                });
            }
        }
        if let Some(first_line) = seen.get(&record.id) {
            return Err(CorpusError::DuplicateId {
                path: display.clone(),
                id: record.id,
                first_line: *first_line,
                line: line_no,
            });
        }
        seen.insert(record.id.clone(), line_no);
        sentences.push((line_no, record));
    }

    if sentences.is_empty() {
        return Err(CorpusError::Empty { path: display });
    }

    let dataset_trait = sentences[0].1.trait_name.clone();
    for (line_no, record) in &sentences {
        if record.trait_name != dataset_trait {
            return Err(CorpusError::MixedKinds {
                path: display.clone(),
                line: *line_no,
                id: record.id.clone(),
            });
        }
    }
    let kind = if dataset_trait.is_some() {
        DatasetKind::Contradictory
    } else {
        DatasetKind::Unrelated
    };

    if sentences.len() != EXPECTED_DATASET_SIZE {
        log::warn!(
            "dataset {display} has {} sentences (expected {EXPECTED_DATASET_SIZE})",
            sentences.len()
        );
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let sentences = sentences
        .into_iter()
        .map(|(_, r)| SourceSentence {
            id: r.id,
            text: r.text,
            dataset_kind: kind,
            target_trait: r.trait_name,
        })
        .collect();

    Ok(SentenceDataset {
        name,
        kind,
        trait_name: dataset_trait,
        sentences,
    })
}

/// Write a dataset back out in the sentence-record format. The inverse of
/// [`load_dataset`]: loading the written file reproduces the dataset
/// (modulo the name, which comes from the file stem).
pub fn write_dataset(dataset: &SentenceDataset, path: &Path) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let io_err = |source| CorpusError::Io {
        path: display.clone(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    for sentence in &dataset.sentences {
        let record = SentenceRecord {
            id: sentence.id.clone(),
            text: sentence.text.clone(),
            trait_name: sentence.target_trait.clone(),
        };
        let line = serde_json::to_string(&record).expect("sentence record serializes");
        writeln!(writer, "{line}").map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
    }
    writer.flush().map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    Ok(())
}

/// Hygiene check: find sentences whose tokens contain a trait keyword.
///
/// Returns `(sentence id, matched term)` pairs in sentence order, one per
/// distinct matching term. An empty result means the corpus is clean.
pub fn scan_for_trait_terms(
    dataset: &SentenceDataset,
    keywords: &KeywordList,
) -> Vec<(String, String)> {
    let per_sentence = crate::par::map_indexed(&dataset.sentences, |_, sentence| {
        let tokens = tokenize(&sentence.text);
        keywords
            .matching_trait_terms(&tokens)
            .into_iter()
            .map(|term| (sentence.id.clone(), term.to_string()))
            .collect::<Vec<_>>()
    });
    per_sentence.into_iter().flatten().collect()
}
