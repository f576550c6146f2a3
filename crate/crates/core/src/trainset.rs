//! Fine-tuning dataset assembly: round-robin sampling over accepted
//! paraphrases and emission of the prompt-completion training file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets::PromptAssets;
use crate::corpus::SentenceDataset;
use crate::digest::sha256_file;
use crate::gate::FilterDecision;
use crate::jsonl;
use crate::teacher::{render_paraphrase_prompt, ParaphraseSample};

/// One training record: the generation prompt for a sentence and a
/// gate-accepted paraphrase of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainsetError {
    #[error("no sentence has an accepted paraphrase")]
    NoEligibleSentences,
    #[error(
        "only {available} accepted paraphrases for target size {target} \
         (shortfall {shortfall}); pass allow_short to emit what exists"
    )]
    Shortfall {
        available: usize,
        target: usize,
        shortfall: usize,
    },
    #[error("target size must be positive")]
    ZeroTarget,
    #[error("accepted sample {0} is missing from the sample set")]
    MissingSample(String),
    #[error("sample {sample_id} references unknown sentence '{sentence_id}'")]
    UnknownSentence {
        sample_id: String,
        sentence_id: String,
    },
    #[error(transparent)]
    Teacher(#[from] crate::teacher::TeacherError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of assembly, carrying provenance for the sidecar manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyOutput {
    pub pairs: Vec<TrainingPair>,
    /// Sample ids behind each pair, in emission order.
    pub source_sample_ids: Vec<String>,
    pub per_sentence_counts: BTreeMap<String, usize>,
    pub seed: u64,
    pub shortfall: bool,
}

/// Assemble training pairs round-robin across sentences.
///
/// Sentences are visited in dataset order; each pass takes at most one
/// unused paraphrase per sentence, skipping exhausted ones, until
/// `target_size` pairs exist. Within a sentence the accepted paraphrases
/// are consumed in seeded-shuffle order. Iteration order is fixed across
/// passes.
pub fn assemble_round_robin(
    dataset: &SentenceDataset,
    samples: &[ParaphraseSample],
    decisions: &[FilterDecision],
    target_size: usize,
    seed: u64,
    allow_short: bool,
    assets: &PromptAssets,
) -> Result<AssemblyOutput, TrainsetError> {
    if target_size == 0 {
        return Err(TrainsetError::ZeroTarget);
    }
    let accepted_ids: HashSet<&str> = decisions
        .iter()
        .filter(|d| d.accepted)
        .map(|d| d.sample_id.as_str())
        .collect();
    let samples_by_id: HashMap<&str, &ParaphraseSample> = samples
        .iter()
        .map(|s| (s.sample_id.as_str(), s))
        .collect();
    for id in &accepted_ids {
        if !samples_by_id.contains_key(id) {
            return Err(TrainsetError::MissingSample(id.to_string()));
        }
    }
    let sentence_ids: HashSet<&str> = dataset.sentences.iter().map(|s| s.id.as_str()).collect();

    // Pools per sentence in dataset order, each in sample-index order
    // before the shuffle.
    let mut pools: HashMap<&str, Vec<&ParaphraseSample>> = HashMap::new();
    for sample in samples {
        if !accepted_ids.contains(sample.sample_id.as_str()) {
            continue;
        }
        if !sentence_ids.contains(sample.sentence_id.as_str()) {
            return Err(TrainsetError::UnknownSentence {
                sample_id: sample.sample_id.clone(),
                sentence_id: sample.sentence_id.clone(),
            });
        }
        pools
            .entry(sample.sentence_id.as_str())
            .or_default()
            .push(sample);
    }
    if pools.is_empty() {
        return Err(TrainsetError::NoEligibleSentences);
    }
    for pool in pools.values_mut() {
        pool.sort_by_key(|s| s.sample_index);
    }

    let total_accepted: usize = pools.values().map(Vec::len).sum();
    let shortfall = total_accepted < target_size;
    if shortfall && !allow_short {
        return Err(TrainsetError::Shortfall {
            available: total_accepted,
            target: target_size,
            shortfall: target_size - total_accepted,
        });
    }
    if shortfall {
        log::warn!(
            "assembling short training set: {total_accepted} accepted < target {target_size}"
        );
    }

    // One RNG drives every shuffle; pools are shuffled in dataset order so
    // the outcome is a pure function of (inputs, seed).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eligible: Vec<&str> = dataset
        .sentences
        .iter()
        .map(|s| s.id.as_str())
        .filter(|id| pools.contains_key(*id))
        .collect();
    let mut shuffled: HashMap<&str, std::vec::IntoIter<&ParaphraseSample>> = HashMap::new();
    for id in &eligible {
        let mut pool = pools.remove(*id).expect("pool exists");
        pool.shuffle(&mut rng);
        shuffled.insert(*id, pool.into_iter());
    }

    let goal = target_size.min(total_accepted);
    let mut pairs = Vec::with_capacity(goal);
    let mut source_sample_ids = Vec::with_capacity(goal);
    let mut per_sentence_counts: BTreeMap<String, usize> = BTreeMap::new();
    let prompts: HashMap<&str, String> = dataset
        .sentences
        .iter()
        .filter(|s| shuffled.contains_key(s.id.as_str()))
        .map(|s| {
            render_paraphrase_prompt(assets, s).map(|prompt| (s.id.as_str(), prompt))
        })
        .collect::<Result<_, _>>()?;

    'outer: loop {
        let mut drew_any = false;
        for id in &eligible {
            if pairs.len() >= goal {
                break 'outer;
            }
            let pool = shuffled.get_mut(*id).expect("iterator exists");
            if let Some(sample) = pool.next() {
                drew_any = true;
                pairs.push(TrainingPair {
                    prompt: prompts[*id].clone(),
                    completion: sample.text.clone(),
                });
                source_sample_ids.push(sample.sample_id.clone());
                *per_sentence_counts.entry(id.to_string()).or_insert(0) += 1;
            }
        }
        if !drew_any {
            break;
        }
    }

    Ok(AssemblyOutput {
        pairs,
        source_sample_ids,
        per_sentence_counts,
        seed,
        shortfall,
    })
}

/// Sidecar manifest written next to the training file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainsetManifest {
    pub n_pairs: usize,
    pub seed: u64,
    pub sha256: String,
    pub source_sample_ids: Vec<String>,
}

/// Write pairs as prompt-completion JSON Lines plus a sidecar manifest
/// (`<path>.manifest.json`) recording provenance and a content checksum.
pub fn emit_training_file(
    output: &AssemblyOutput,
    path: &Path,
) -> Result<TrainsetManifest, TrainsetError> {
    jsonl::write_jsonl(path, &output.pairs)?;
    let manifest = TrainsetManifest {
        n_pairs: output.pairs.len(),
        seed: output.seed,
        sha256: sha256_file(path)?,
        source_sample_ids: output.source_sample_ids.clone(),
    };
    let manifest_path = sidecar_path(path);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(manifest)
}

pub fn sidecar_path(training_path: &Path) -> std::path::PathBuf {
    let mut name = training_path.as_os_str().to_owned();
    name.push(".manifest.json");
    std::path::PathBuf::from(name)
}

pub fn read_training_file(path: &Path) -> Result<Vec<TrainingPair>, TrainsetError> {
    Ok(jsonl::read_jsonl(path)?)
}
