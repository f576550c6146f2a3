//! Stage orchestration over a run directory.
//!
//! Each stage reads its inputs from the run directory, verifies their
//! digests against the manifest records of the producing stages, writes
//! its outputs, and appends a manifest record. Re-running a completed
//! stage is a no-op unless forced; inputs that changed since their
//! producing stage ran are reported as stale rather than silently
//! reprocessed. One directory lock serializes writers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::assets::PromptAssets;
use crate::audit;
use crate::config::{ProviderKind, RunConfig};
use crate::corpus::{self, SentenceDataset};
use crate::digest::sha256_file;
use crate::evalstats::{self, ConditionLabel};
use crate::gate::{self, GateConfig, KeywordList};
use crate::jsonl;
use crate::lexstats;
use crate::manifest::{ManifestError, RunManifest};
use crate::provider::{
    http::HttpProvider, FineTuneStatus, Gateway, MockProvider, Provider, ProviderError,
};
use crate::report::{build_report, ExperimentReport};
use crate::teacher::{self, ParaphraseSample};
use crate::trainset;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const FIRST_SCORES_FILE: &str = "first_scores.jsonl";
pub const GATE_SUMMARY_FILE: &str = "gate_summary.json";
pub const SECOND_SCORES_FILE: &str = "second_scores.jsonl";
pub const VALIDATION_REPORT_FILE: &str = "validation_report.json";
pub const REVIEW_QUEUE_FILE: &str = "review_queue.jsonl";
pub const TRAINSET_FILE: &str = "trainset.jsonl";
pub const FINETUNE_JOB_FILE: &str = "finetune_job.json";
pub const EVAL_FILE: &str = "eval.jsonl";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Gate,
    Audit,
    Assemble,
    Finetune,
    Eval,
    Stats,
    Lexstats,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Gate => "gate",
            Stage::Audit => "audit",
            Stage::Assemble => "assemble",
            Stage::Finetune => "finetune",
            Stage::Eval => "eval",
            Stage::Stats => "stats",
            Stage::Lexstats => "lexstats",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generate" => Ok(Stage::Generate),
            "gate" => Ok(Stage::Gate),
            "audit" => Ok(Stage::Audit),
            "assemble" => Ok(Stage::Assemble),
            "finetune" => Ok(Stage::Finetune),
            "eval" => Ok(Stage::Eval),
            "stats" => Ok(Stage::Stats),
            "lexstats" => Ok(Stage::Lexstats),
            other => Err(format!("unknown stage '{other}'")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("run directory is locked by another process: {0}")]
    Locked(String),
    #[error("missing input for stage '{stage}': {name} (run '{hint}' first)")]
    MissingInput {
        stage: String,
        name: String,
        hint: String,
    },
    #[error(
        "stale input for stage '{stage}': {name} changed since '{producer}' ran \
         (recorded {recorded}, found {actual}); re-run '{producer}' or pass --force"
    )]
    StaleInput {
        stage: String,
        name: String,
        producer: String,
        recorded: String,
        actual: String,
    },
    #[error("stage '{0}' is not runnable in a single-condition run directory; {1}")]
    NotRunnable(String, String),
    #[error("fine-tuning is disabled in this config")]
    FinetuneDisabled,
    #[error("fine-tune job {id} ended {status:?} without a result model")]
    FinetuneFailed { id: String, status: FineTuneStatus },
    #[error("eval model is not resolvable: {0}")]
    NoEvalModel(String),
    #[error("duplicate condition '{0}' among stats runs")]
    DuplicateCondition(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Teacher(#[from] teacher::TeacherError),
    #[error(transparent)]
    Gate(#[from] gate::GateError),
    #[error(transparent)]
    Audit(#[from] audit::AuditError),
    #[error(transparent)]
    Trainset(#[from] trainset::TrainsetError),
    #[error(transparent)]
    Eval(#[from] evalstats::EvalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exclusive lock on a run directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(run_dir: &Path) -> Result<Self, PipelineError> {
        let path = run_dir.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(path.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Outputs already present with matching digests; nothing to do.
    AlreadyComplete,
}

pub struct RunContext {
    pub config: RunConfig,
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    manifest_path: PathBuf,
    assets: PromptAssets,
    gateway: Gateway,
    _lock: DirLock,
}

fn build_provider(config: &RunConfig) -> Result<Arc<dyn Provider>, PipelineError> {
    match config.provider.kind {
        ProviderKind::Mock => {
            let provider = match &config.provider.mock_script {
                Some(path) => MockProvider::from_script_file(path)?,
                None => MockProvider::new(Default::default()),
            };
            Ok(Arc::new(provider))
        }
        ProviderKind::Http => Ok(Arc::new(HttpProvider::new(
            &config.provider.to_provider_config(),
        )?)),
    }
}

impl RunContext {
    /// Open (or create) a run directory for this config. Reopening with
    /// a different effective config (e.g. CLI overrides) refreshes the
    /// manifest's config snapshot; stages recorded under the old config
    /// become eligible to re-run.
    pub fn open(config: RunConfig, run_dir: &Path) -> Result<Self, PipelineError> {
        config.validate()?;
        std::fs::create_dir_all(run_dir)?;
        let lock = DirLock::acquire(run_dir)?;

        let provider = build_provider(&config)?;
        let gateway = Gateway::new(provider, &config.provider.to_provider_config())?;
        let assets = PromptAssets::builtin();

        let config_json = serde_json::to_value(&config).expect("config serializes");
        let mut asset_checksums = assets.checksums();
        if let Ok(keywords) = KeywordList::builtin(&config.trait_name) {
            asset_checksums.extend(keywords.checksums());
        }
        let fresh = RunManifest::new(
            config.seed,
            config.deterministic,
            match config.provider.kind {
                ProviderKind::Mock => "mock",
                ProviderKind::Http => "http",
            },
            config_json.clone(),
            asset_checksums,
        );

        let manifest_path = run_dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let mut existing = RunManifest::load(&manifest_path)?;
            if existing.config_digest != fresh.config_digest {
                log::warn!(
                    "effective config for {} changed; completed stages will re-run",
                    run_dir.display()
                );
                existing.update_config(config_json);
            }
            existing
        } else {
            fresh
        };

        Ok(Self {
            config,
            run_dir: run_dir.to_path_buf(),
            manifest,
            manifest_path,
            assets,
            gateway,
            _lock: lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn save_manifest(&self) -> Result<(), PipelineError> {
        self.manifest.save(&self.manifest_path)?;
        Ok(())
    }

    /// Digest an input file that a prior stage produced, checking it is
    /// present and unchanged since that stage recorded it.
    fn stage_input(
        &self,
        stage: Stage,
        producer: Stage,
        name: &str,
        path: &Path,
    ) -> Result<String, PipelineError> {
        let record = self.manifest.stage(producer.name()).ok_or_else(|| {
            PipelineError::MissingInput {
                stage: stage.name().into(),
                name: name.into(),
                hint: producer.name().into(),
            }
        })?;
        if !path.exists() {
            return Err(PipelineError::MissingInput {
                stage: stage.name().into(),
                name: name.into(),
                hint: producer.name().into(),
            });
        }
        let actual = sha256_file(path)?;
        match record.outputs.get(name) {
            Some(recorded) if recorded == &actual => Ok(actual),
            Some(recorded) => Err(PipelineError::StaleInput {
                stage: stage.name().into(),
                name: name.into(),
                producer: producer.name().into(),
                recorded: recorded.clone(),
                actual,
            }),
            None => Err(PipelineError::MissingInput {
                stage: stage.name().into(),
                name: name.into(),
                hint: producer.name().into(),
            }),
        }
    }

    /// Resolve a stage input: an explicitly configured path is digested
    /// as-is (external provenance), otherwise the default run-directory
    /// file is checked against its producing stage's record.
    fn resolve_input(
        &self,
        stage: Stage,
        producer: Stage,
        name: &str,
        explicit: Option<&PathBuf>,
    ) -> Result<(PathBuf, String), PipelineError> {
        match explicit {
            Some(path) => {
                if !path.exists() {
                    return Err(PipelineError::MissingInput {
                        stage: stage.name().into(),
                        name: path.display().to_string(),
                        hint: "provide an existing file".into(),
                    });
                }
                Ok((path.clone(), sha256_file(path)?))
            }
            None => {
                let path = self.path(name);
                let digest = self.stage_input(stage, producer, name, &path)?;
                Ok((path, digest))
            }
        }
    }

    fn already_complete(&self, stage: Stage) -> Result<bool, PipelineError> {
        let Some(record) = self.manifest.stage(stage.name()) else {
            return Ok(false);
        };
        // A stage only counts as complete under the config it ran with.
        if record.config_digest != self.manifest.config_digest {
            return Ok(false);
        }
        Ok(self
            .manifest
            .verify_outputs(stage.name(), |name| self.path(name))?)
    }

    fn load_dataset(&self) -> Result<SentenceDataset, PipelineError> {
        Ok(corpus::load_dataset(&self.config.dataset)?)
    }

    fn keywords(&self) -> Result<KeywordList, PipelineError> {
        match &self.config.gate.keyword_dir {
            Some(dir) => Ok(KeywordList::from_dir(dir, &self.config.trait_name)?),
            None => Ok(KeywordList::builtin(&self.config.trait_name)?),
        }
    }

    /// Execute one stage. Completed stages with intact outputs are
    /// skipped unless `force` is set.
    pub fn run_stage(&mut self, stage: Stage, force: bool) -> Result<StageOutcome, PipelineError> {
        if !force && self.already_complete(stage)? {
            log::info!("stage {} already complete; skipping", stage.name());
            return Ok(StageOutcome::AlreadyComplete);
        }
        match stage {
            Stage::Generate => self.stage_generate(),
            Stage::Gate => self.stage_gate(),
            Stage::Audit => self.stage_audit(),
            Stage::Assemble => self.stage_assemble(),
            Stage::Finetune => self.stage_finetune(),
            Stage::Eval => self.stage_eval(),
            Stage::Stats => Err(PipelineError::NotRunnable(
                "stats".into(),
                "use `sublearn stats --runs <trait> <neutral> <baseline>` or `sublearn experiment`".into(),
            )),
            Stage::Lexstats => Err(PipelineError::NotRunnable(
                "lexstats".into(),
                "use `sublearn lexstats --neutral <file> --trait <file>`".into(),
            )),
        }?;
        self.save_manifest()?;
        Ok(StageOutcome::Ran)
    }

    fn stage_generate(&mut self) -> Result<(), PipelineError> {
        let dataset = self.load_dataset()?;
        let spec = self.config.teacher.to_spec(Some(&self.config.trait_name))?;
        let samples_path = self.path(SAMPLES_FILE);
        let (_, summary) = teacher::generate_paraphrases(
            &dataset,
            &spec,
            &self.assets,
            &self.gateway,
            Some(&samples_path),
        )?;
        log::info!(
            "generated {} samples from {} sentences",
            summary.n_samples,
            summary.n_sentences
        );
        self.manifest.record_stage(
            "generate",
            serde_json::json!({
                "teacher": spec.kind.to_string(),
                "samples-per-sentence": spec.per_sentence_samples,
                "temperature": spec.temperature,
                "model": spec.model,
                "max_tokens": "provider-default",
            }),
            BTreeMap::from([("dataset".into(), sha256_file(&self.config.dataset)?)]),
            BTreeMap::from([(SAMPLES_FILE.into(), sha256_file(&samples_path)?)]),
        );
        Ok(())
    }

    fn stage_gate(&mut self) -> Result<(), PipelineError> {
        let (samples_path, samples_digest) = self.resolve_input(
            Stage::Gate,
            Stage::Generate,
            SAMPLES_FILE,
            self.config.inputs.samples.as_ref(),
        )?;
        let dataset = self.load_dataset()?;
        let samples: Vec<ParaphraseSample> = jsonl::read_jsonl(&samples_path)?;
        let keywords = self.keywords()?;
        let dataset_kind = match &self.config.gate.dataset_kind {
            Some(kind) => kind
                .parse()
                .map_err(crate::config::ConfigError::Invalid)?,
            None => dataset.kind,
        };
        let gate_config = GateConfig {
            threshold: self.config.gate.threshold,
            judge_model: self.config.gate.judge_model.clone(),
            dataset_kind,
            variant: gate::PromptVariant::Standard,
        };
        let outcome = gate::run_gate(
            &samples,
            &dataset,
            &keywords,
            &gate_config,
            &self.assets,
            &self.gateway,
        )?;
        log::info!(
            "gate accepted {}/{} samples (AR {:.1}%)",
            outcome.summary.n_accepted,
            outcome.summary.n_total,
            outcome.summary.acceptance_rate * 100.0
        );
        let decisions_path = self.path(DECISIONS_FILE);
        let scores_path = self.path(FIRST_SCORES_FILE);
        let summary_path = self.path(GATE_SUMMARY_FILE);
        jsonl::write_jsonl(&decisions_path, &outcome.decisions)?;
        jsonl::write_jsonl(&scores_path, &outcome.scores)?;
        std::fs::write(
            &summary_path,
            serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"),
        )?;
        self.manifest.record_stage(
            "gate",
            serde_json::json!({
                "threshold": gate_config.threshold,
                "judge-model": gate_config.judge_model,
                "dataset-kind": gate_config.dataset_kind.to_string(),
            }),
            BTreeMap::from([
                (SAMPLES_FILE.into(), samples_digest),
                ("dataset".into(), sha256_file(&self.config.dataset)?),
            ]),
            BTreeMap::from([
                (DECISIONS_FILE.into(), sha256_file(&decisions_path)?),
                (FIRST_SCORES_FILE.into(), sha256_file(&scores_path)?),
                (GATE_SUMMARY_FILE.into(), sha256_file(&summary_path)?),
            ]),
        );
        Ok(())
    }

    fn stage_audit(&mut self) -> Result<(), PipelineError> {
        let (samples_path, samples_digest) = self.resolve_input(
            Stage::Audit,
            Stage::Generate,
            SAMPLES_FILE,
            self.config.inputs.samples.as_ref(),
        )?;
        let (decisions_path, decisions_digest) = self.resolve_input(
            Stage::Audit,
            Stage::Gate,
            DECISIONS_FILE,
            self.config.inputs.decisions.as_ref(),
        )?;
        let dataset = self.load_dataset()?;
        let samples: Vec<ParaphraseSample> = jsonl::read_jsonl(&samples_path)?;
        let first_decisions: Vec<gate::FilterDecision> = jsonl::read_jsonl(&decisions_path)?;
        // Continuous first-judge scores are needed only for the Spearman
        // agreement; runs gated elsewhere may not have them.
        let first_scores: Vec<gate::JudgeScore> =
            if self.path(FIRST_SCORES_FILE).exists() {
                jsonl::read_jsonl(&self.path(FIRST_SCORES_FILE))?
            } else {
                Vec::new()
            };
        let variant = self.config.audit.resolve_variant(dataset.kind)?;

        let second_scores = audit::rescore(
            &samples,
            &dataset,
            &self.assets,
            &self.gateway,
            &self.config.audit.judge_model,
            variant,
        )?;
        let second_decisions =
            audit::decisions_from_scores(&second_scores, self.config.gate.threshold);
        let mut report = audit::confusion_metrics(
            &format!("{}-{}", self.config.trait_name, dataset.kind),
            &first_decisions,
            &second_decisions,
        )?;
        report.spearman_rho = audit::judge_agreement(&first_scores, &second_scores).ok();
        let queue = audit::build_review_queue(&report, &samples, &dataset)?;

        let second_scores_path = self.path(SECOND_SCORES_FILE);
        let report_path = self.path(VALIDATION_REPORT_FILE);
        let queue_path = self.path(REVIEW_QUEUE_FILE);
        jsonl::write_jsonl(&second_scores_path, &second_scores)?;
        std::fs::write(
            &report_path,
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
        jsonl::write_jsonl(&queue_path, &queue)?;
        log::info!(
            "audit: AR {:.1}% FDR {:.1}% FNR {:.1}% ({} flagged)",
            report.ar * 100.0,
            report.fdr * 100.0,
            report.fnr * 100.0,
            report.flagged.len()
        );
        self.manifest.record_stage(
            "audit",
            serde_json::json!({
                "variant": match variant {
                    gate::PromptVariant::Standard => "standard",
                    gate::PromptVariant::IntentSensitive => "intent-sensitive",
                },
                "second-judge-model": self.config.audit.judge_model,
            }),
            BTreeMap::from([
                (SAMPLES_FILE.into(), samples_digest),
                (DECISIONS_FILE.into(), decisions_digest),
            ]),
            BTreeMap::from([
                (SECOND_SCORES_FILE.into(), sha256_file(&second_scores_path)?),
                (VALIDATION_REPORT_FILE.into(), sha256_file(&report_path)?),
                (REVIEW_QUEUE_FILE.into(), sha256_file(&queue_path)?),
            ]),
        );
        Ok(())
    }

    fn stage_assemble(&mut self) -> Result<(), PipelineError> {
        let (samples_path, samples_digest) = self.resolve_input(
            Stage::Assemble,
            Stage::Generate,
            SAMPLES_FILE,
            self.config.inputs.samples.as_ref(),
        )?;
        let (decisions_path, decisions_digest) = self.resolve_input(
            Stage::Assemble,
            Stage::Gate,
            DECISIONS_FILE,
            self.config.inputs.decisions.as_ref(),
        )?;
        let dataset = self.load_dataset()?;
        let samples: Vec<ParaphraseSample> = jsonl::read_jsonl(&samples_path)?;
        let decisions: Vec<gate::FilterDecision> = jsonl::read_jsonl(&decisions_path)?;
        let output = trainset::assemble_round_robin(
            &dataset,
            &samples,
            &decisions,
            self.config.assembly.target_size,
            self.config.seed,
            self.config.assembly.allow_short,
            &self.assets,
        )?;
        let trainset_path = self.path(TRAINSET_FILE);
        let manifest = trainset::emit_training_file(&output, &trainset_path)?;
        log::info!("assembled {} training pairs", manifest.n_pairs);
        self.manifest.record_stage(
            "assemble",
            serde_json::json!({
                "target": self.config.assembly.target_size,
                "seed": self.config.seed,
            }),
            BTreeMap::from([
                (SAMPLES_FILE.into(), samples_digest),
                (DECISIONS_FILE.into(), decisions_digest),
            ]),
            BTreeMap::from([(TRAINSET_FILE.into(), sha256_file(&trainset_path)?)]),
        );
        Ok(())
    }

    fn stage_finetune(&mut self) -> Result<(), PipelineError> {
        if !self.config.finetune.enabled {
            return Err(PipelineError::FinetuneDisabled);
        }
        let (trainset_path, trainset_digest) = self.resolve_input(
            Stage::Finetune,
            Stage::Assemble,
            TRAINSET_FILE,
            self.config.inputs.training_file.as_ref(),
        )?;
        let file_ref = self.gateway.upload_training_file(&trainset_path)?;
        let spec = self.config.finetune.to_spec(&file_ref);
        let job = self.gateway.create_finetune(&spec)?;
        let job = self.gateway.poll_finetune(
            &job.id,
            Duration::from_secs(self.config.finetune.poll_interval_secs),
        )?;
        let job_path = self.path(FINETUNE_JOB_FILE);
        std::fs::write(
            &job_path,
            serde_json::to_string_pretty(&job).expect("job serializes"),
        )?;
        if job.status != FineTuneStatus::Succeeded {
            return Err(PipelineError::FinetuneFailed {
                id: job.id,
                status: job.status,
            });
        }
        log::info!(
            "fine-tune {} succeeded: {}",
            job.id,
            job.result_model.as_deref().unwrap_or("?")
        );
        self.manifest.record_stage(
            "finetune",
            serde_json::json!({
                "epochs": spec.n_epochs,
                "lr-mult": spec.learning_rate_multiplier,
                "batch": spec.batch_size,
                "base-model": spec.base_model,
            }),
            BTreeMap::from([(TRAINSET_FILE.into(), trainset_digest)]),
            BTreeMap::from([(FINETUNE_JOB_FILE.into(), sha256_file(&job_path)?)]),
        );
        Ok(())
    }

    fn eval_model(&self) -> Result<(String, Option<String>), PipelineError> {
        if !self.config.eval.model.is_empty() {
            return Ok((self.config.eval.model.clone(), None));
        }
        if !self.config.finetune.enabled {
            return Ok((self.config.finetune.base_model.clone(), None));
        }
        let job_path = self.path(FINETUNE_JOB_FILE);
        if !job_path.exists() {
            return Err(PipelineError::MissingInput {
                stage: "eval".into(),
                name: FINETUNE_JOB_FILE.into(),
                hint: "finetune".into(),
            });
        }
        let job: crate::provider::FineTuneJob =
            serde_json::from_str(&std::fs::read_to_string(&job_path)?)
                .map_err(|e| PipelineError::NoEvalModel(e.to_string()))?;
        let model = job.result_model.ok_or_else(|| {
            PipelineError::NoEvalModel(format!("job {} has no result model", job.id))
        })?;
        Ok((model, Some(sha256_file(&job_path)?)))
    }

    fn condition_label(&self) -> ConditionLabel {
        if !self.config.finetune.enabled {
            ConditionLabel::Baseline
        } else if self.config.teacher.kind.starts_with("trait") {
            ConditionLabel::Trait
        } else {
            ConditionLabel::Neutral
        }
    }

    fn stage_eval(&mut self) -> Result<(), PipelineError> {
        let questions = evalstats::load_questions(&self.config.eval.questions)?;
        let (model, job_digest) = self.eval_model()?;
        let run = evalstats::run_eval(
            &model,
            self.condition_label(),
            &questions,
            self.config.eval.samples_per_question,
            self.config.eval.temperature,
            &self.gateway,
        )?;
        let eval_path = self.path(EVAL_FILE);
        evalstats::write_eval_run(&run, &eval_path)?;
        log::info!(
            "evaluated {} on {} questions x {} samples{}",
            model,
            run.questions.len(),
            run.samples_per_question,
            if run.partial { " (partial)" } else { "" }
        );
        let mut inputs = BTreeMap::from([(
            "questions".to_string(),
            sha256_file(&self.config.eval.questions)?,
        )]);
        if let Some(digest) = job_digest {
            inputs.insert(FINETUNE_JOB_FILE.into(), digest);
        }
        self.manifest.record_stage(
            "eval",
            serde_json::json!({
                "model": model,
                "n": self.config.eval.samples_per_question,
                "temp": self.config.eval.temperature,
                "condition": self.condition_label().to_string(),
            }),
            inputs,
            BTreeMap::from([
                (EVAL_FILE.into(), sha256_file(&eval_path)?),
                (
                    format!("{EVAL_FILE}.meta.json"),
                    sha256_file(&evalstats::meta_path(&eval_path))?,
                ),
            ]),
        );
        Ok(())
    }
}

/// Compute the comparison report from written eval-run files; conditions
/// come from each run's meta sidecar.
pub fn stats_from_run_files(
    trait_name: &str,
    run_paths: &[PathBuf],
) -> Result<ExperimentReport, PipelineError> {
    let mut baseline = None;
    let mut neutral = None;
    let mut trait_run = None;
    for path in run_paths {
        let run = evalstats::read_eval_run(path)?;
        let slot = match run.condition {
            ConditionLabel::Baseline => &mut baseline,
            ConditionLabel::Neutral => &mut neutral,
            ConditionLabel::Trait => &mut trait_run,
        };
        if slot.is_some() {
            return Err(PipelineError::DuplicateCondition(run.condition.to_string()));
        }
        *slot = Some(run);
    }
    Ok(build_report(
        trait_name,
        baseline.as_ref(),
        neutral.as_ref(),
        trait_run.as_ref(),
    )?)
}

/// Lexical comparison of two paraphrase corpora files. Accepts JSON Lines
/// with a `text` field (sample files) or a `completion` field (training
/// files).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexstatsReport {
    pub total_neutral: u64,
    pub total_trait: u64,
    pub overrepresented: Vec<lexstats::OverrepRow>,
    pub exclusive: Vec<lexstats::ExclusiveRow>,
}

impl LexstatsReport {
    pub fn to_text(&self) -> String {
        format!(
            "token totals: neutral {} / trait {}\n\nover-represented words\n{}\nwords exclusive to the trait corpus\n{}",
            self.total_neutral,
            self.total_trait,
            lexstats::format_overrep_table(&self.overrepresented),
            lexstats::format_exclusive_table(&self.exclusive),
        )
    }
}

fn read_text_corpus(path: &Path) -> Result<Vec<String>, PipelineError> {
    let records: Vec<serde_json::Value> = jsonl::read_jsonl(path)?;
    let mut texts = Vec::with_capacity(records.len());
    for (idx, record) in records.iter().enumerate() {
        let text = record
            .get("text")
            .or_else(|| record.get("completion"))
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                jsonl::JsonlError::BadLine {
                    path: path.display().to_string(),
                    line: idx as u64 + 1,
                    message: "record has neither 'text' nor 'completion' string field".into(),
                }
            })?;
        texts.push(text.to_string());
    }
    Ok(texts)
}

pub fn lexstats_from_files(
    neutral_path: &Path,
    trait_path: &Path,
    top_k: usize,
) -> Result<LexstatsReport, PipelineError> {
    let neutral_corpus = read_text_corpus(neutral_path)?;
    let trait_corpus = read_text_corpus(trait_path)?;
    let neutral_counts = lexstats::count_tokens(&neutral_corpus);
    let trait_counts = lexstats::count_tokens(&trait_corpus);
    Ok(LexstatsReport {
        total_neutral: neutral_counts.total_tokens(),
        total_trait: trait_counts.total_tokens(),
        overrepresented: lexstats::overrepresentation(&neutral_counts, &trait_counts, top_k),
        exclusive: lexstats::exclusive_words(&neutral_counts, &trait_counts, top_k),
    })
}

/// Outcome of a three-condition experiment.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub run_dir: PathBuf,
    pub condition_dirs: BTreeMap<String, PathBuf>,
}

fn condition_config(base: &RunConfig, label: ConditionLabel) -> RunConfig {
    let mut config = base.clone();
    match label {
        ConditionLabel::Trait => {
            config.teacher.kind = "trait".into();
            if config.finetune.suffix.is_empty() {
                config.finetune.suffix = format!("trait-{}", config.trait_name);
            }
        }
        ConditionLabel::Neutral => {
            config.teacher.kind = "neutral".into();
            if config.finetune.suffix.is_empty() {
                config.finetune.suffix = "neutral".into();
            }
        }
        ConditionLabel::Baseline => {
            config.finetune.enabled = false;
        }
    }
    config
}

/// Drive the full experiment: generate, gate, assemble, fine-tune, and
/// evaluate for the trait and neutral conditions, evaluate the bare base
/// model as the baseline, then compute the comparison report.
pub fn run_experiment(
    base_config: &RunConfig,
    run_dir: &Path,
    force: bool,
) -> Result<ExperimentOutcome, PipelineError> {
    base_config.validate()?;
    std::fs::create_dir_all(run_dir)?;
    let _lock = DirLock::acquire(run_dir)?;

    let mut condition_dirs = BTreeMap::new();
    let mut eval_paths = Vec::new();
    for label in [
        ConditionLabel::Trait,
        ConditionLabel::Neutral,
        ConditionLabel::Baseline,
    ] {
        let config = condition_config(base_config, label);
        let dir = run_dir.join(label.to_string());
        let stages: &[Stage] = if config.finetune.enabled {
            &[
                Stage::Generate,
                Stage::Gate,
                Stage::Assemble,
                Stage::Finetune,
                Stage::Eval,
            ]
        } else {
            &[Stage::Eval]
        };
        let mut context = RunContext::open(config, &dir, force)?;
        for stage in stages {
            context.run_stage(*stage, force)?;
        }
        eval_paths.push(dir.join(EVAL_FILE));
        condition_dirs.insert(label.to_string(), dir);
    }

    let report = stats_from_run_files(&base_config.trait_name, &eval_paths)?;
    let report_json = run_dir.join(REPORT_JSON_FILE);
    let report_text = run_dir.join(REPORT_TEXT_FILE);
    std::fs::write(
        &report_json,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    std::fs::write(&report_text, report.to_text())?;

    // Top-level manifest binds the condition manifests and the report.
    let config_json = serde_json::to_value(base_config).expect("config serializes");
    let mut manifest = RunManifest::new(
        base_config.seed,
        base_config.deterministic,
        match base_config.provider.kind {
            ProviderKind::Mock => "mock",
            ProviderKind::Http => "http",
        },
        config_json,
        PromptAssets::builtin().checksums(),
    );
    let mut inputs = BTreeMap::new();
    for (label, dir) in &condition_dirs {
        inputs.insert(
            format!("{label}/{MANIFEST_FILE}"),
            sha256_file(&dir.join(MANIFEST_FILE))?,
        );
    }
    manifest.record_stage(
        "stats",
        serde_json::json!({"trait": base_config.trait_name}),
        inputs,
        BTreeMap::from([
            (REPORT_JSON_FILE.into(), sha256_file(&report_json)?),
            (REPORT_TEXT_FILE.into(), sha256_file(&report_text)?),
        ]),
    );
    manifest.save(&run_dir.join(MANIFEST_FILE))?;

    Ok(ExperimentOutcome {
        report,
        run_dir: run_dir.to_path_buf(),
        condition_dirs,
    })
}
