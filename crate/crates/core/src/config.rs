//! Declarative run configuration: one TOML file per condition, with every
//! knob a stage needs. Defaults carry the reference hyperparameters
//! (fidelity threshold 0.95, generation temperature 1.4, fine-tune
//! epochs 10 / lr multiplier 0.1 / batch 66, eval 200 samples at
//! temperature 1.0), so a config only states what differs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gate::{PromptVariant, DEFAULT_FIDELITY_THRESHOLD};
use crate::provider::{FineTuneSpec, ProviderConfig};
use crate::teacher::{TeacherKind, TeacherSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    pub base_url: String,
    pub api_key_env: String,
    pub max_concurrent_requests: usize,
    pub timeout_secs: u64,
    pub retry: RetrySection,
    /// Script file for the mock provider.
    pub mock_script: Option<PathBuf>,
}

impl Default for ProviderSection {
    fn default() -> Self {
        let base = ProviderConfig::default();
        Self {
            kind: ProviderKind::Mock,
            base_url: base.base_url,
            api_key_env: base.api_key_env,
            max_concurrent_requests: base.max_concurrent_requests,
            timeout_secs: base.timeout_secs,
            retry: RetrySection::default(),
            mock_script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrySection {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
}

impl Default for RetrySection {
    fn default() -> Self {
        let base = crate::provider::RetryPolicy::default();
        Self {
            max_attempts: base.max_attempts,
            initial_backoff_ms: base.initial_backoff_ms,
            backoff_multiplier: base.backoff_multiplier,
        }
    }
}

impl ProviderSection {
    pub fn to_provider_config(&self) -> ProviderConfig {
        ProviderConfig {
            base_url: self.base_url.clone(),
            api_key_env: self.api_key_env.clone(),
            max_concurrent_requests: self.max_concurrent_requests,
            retry: crate::provider::RetryPolicy {
                max_attempts: self.retry.max_attempts,
                initial_backoff_ms: self.retry.initial_backoff_ms,
                backoff_multiplier: self.retry.backoff_multiplier,
            },
            timeout_secs: self.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSection {
    pub kind: String,
    pub model: String,
    pub temperature: f64,
    pub per_sentence_samples: u32,
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self {
            kind: "neutral".into(),
            model: "gpt-4.1-nano".into(),
            temperature: 1.4,
            per_sentence_samples: 16,
        }
    }
}

impl TeacherSection {
    /// Resolve the section into a validated spec. `kind` is either
    /// `neutral` or `trait` (using the run's trait name) or
    /// `trait:<name>`.
    pub fn to_spec(&self, run_trait: Option<&str>) -> Result<TeacherSpec, ConfigError> {
        let (kind, trait_name) = if self.kind == "neutral" {
            (TeacherKind::Neutral, None)
        } else if self.kind == "trait" {
            let name = run_trait.ok_or_else(|| {
                ConfigError::Invalid("teacher.kind = \"trait\" requires a trait name".into())
            })?;
            (TeacherKind::Trait, Some(name.to_string()))
        } else if let Some(name) = self.kind.strip_prefix("trait:") {
            (TeacherKind::Trait, Some(name.to_string()))
        } else {
            return Err(ConfigError::Invalid(format!(
                "teacher.kind must be 'neutral', 'trait', or 'trait:<name>', got '{}'",
                self.kind
            )));
        };
        let spec = TeacherSpec {
            kind,
            trait_name,
            model: self.model.clone(),
            temperature: self.temperature,
            per_sentence_samples: self.per_sentence_samples,
        };
        spec.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateSection {
    pub threshold: f64,
    pub judge_model: String,
    /// Directory of keyword lists; empty means the built-in assets.
    pub keyword_dir: Option<PathBuf>,
    /// Force the dataset kind instead of inferring it from the records
    /// (controls whether trait keywords are consulted).
    pub dataset_kind: Option<String>,
}

impl Default for GateSection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_FIDELITY_THRESHOLD,
            judge_model: "gpt-4o-mini".into(),
            keyword_dir: None,
            dataset_kind: None,
        }
    }
}

/// Explicit stage-input paths. By default each stage reads the previous
/// stage's output from the run directory and verifies its digest; a path
/// named here is used as-is instead (external provenance, digested but
/// not cross-checked against a producing stage).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputsSection {
    /// Samples file for gate / audit / assemble.
    pub samples: Option<PathBuf>,
    /// First-judge decisions file for audit / assemble.
    pub decisions: Option<PathBuf>,
    /// Training file for finetune.
    pub training_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSection {
    /// `standard`, `intent-sensitive`, or `auto` (intent-sensitive on
    /// contradictory datasets).
    pub variant: String,
    pub judge_model: String,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            variant: "auto".into(),
            judge_model: "gpt-5-mini".into(),
        }
    }
}

impl AuditSection {
    pub fn resolve_variant(
        &self,
        dataset_kind: crate::corpus::DatasetKind,
    ) -> Result<PromptVariant, ConfigError> {
        match self.variant.as_str() {
            "auto" => Ok(match dataset_kind {
                crate::corpus::DatasetKind::Contradictory => PromptVariant::IntentSensitive,
                crate::corpus::DatasetKind::Unrelated => PromptVariant::Standard,
            }),
            other => other
                .parse()
                .map_err(|e: String| ConfigError::Invalid(e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblySection {
    pub target_size: usize,
    pub allow_short: bool,
}

impl Default for AssemblySection {
    fn default() -> Self {
        Self {
            target_size: 10_000,
            allow_short: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneSection {
    pub enabled: bool,
    pub base_model: String,
    pub n_epochs: u32,
    pub learning_rate_multiplier: f64,
    pub batch_size: u32,
    pub suffix: String,
    pub poll_interval_secs: u64,
}

impl Default for FineTuneSection {
    fn default() -> Self {
        Self {
            enabled: true,
            base_model: "gpt-4.1-nano".into(),
            n_epochs: 10,
            learning_rate_multiplier: 0.1,
            batch_size: 66,
            suffix: String::new(),
            poll_interval_secs: 30,
        }
    }
}

impl FineTuneSection {
    pub fn to_spec(&self, training_file_ref: &str) -> FineTuneSpec {
        FineTuneSpec {
            training_file_ref: training_file_ref.to_string(),
            base_model: self.base_model.clone(),
            n_epochs: self.n_epochs,
            learning_rate_multiplier: self.learning_rate_multiplier,
            batch_size: self.batch_size,
            suffix: self.suffix.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub questions: PathBuf,
    pub samples_per_question: u32,
    pub temperature: f64,
    /// Model to evaluate; empty means the fine-tuned model from this run
    /// (or the base model when fine-tuning is disabled).
    pub model: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            questions: PathBuf::from("data/questions/animal_questions.jsonl"),
            samples_per_question: 200,
            temperature: 1.0,
            model: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Target trait for filtering and evaluation.
    pub trait_name: String,
    pub dataset: PathBuf,
    /// Zero timestamps and derived run ids, for digest-comparable runs.
    pub deterministic: bool,
    pub provider: ProviderSection,
    pub teacher: TeacherSection,
    pub gate: GateSection,
    pub audit: AuditSection,
    pub assembly: AssemblySection,
    pub finetune: FineTuneSection,
    pub eval: EvalSection,
    pub inputs: InputsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trait_name: "dolphin".into(),
            dataset: PathBuf::new(),
            deterministic: false,
            provider: ProviderSection::default(),
            teacher: TeacherSection::default(),
            gate: GateSection::default(),
            audit: AuditSection::default(),
            assembly: AssemblySection::default(),
            finetune: FineTuneSection::default(),
            eval: EvalSection::default(),
            inputs: InputsSection::default(),
        }
    }
}

impl RunConfig {
    /// Load a config file. Relative file paths inside it resolve against
    /// the config file's directory, so configs work from any working
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let Some(base) = path.parent() {
            config.anchor_paths(base);
        }
        Ok(config)
    }

    fn anchor_paths(&mut self, base: &Path) {
        let anchor = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&p);
            }
        };
        anchor(&mut self.dataset);
        anchor(&mut self.eval.questions);
        for optional in [
            &mut self.provider.mock_script,
            &mut self.gate.keyword_dir,
            &mut self.inputs.samples,
            &mut self.inputs.decisions,
            &mut self.inputs.training_file,
        ] {
            if let Some(path) = optional {
                anchor(path);
            }
        }
    }

    /// Validate every module precondition that can be checked without
    /// touching the network.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trait_name.is_empty() || self.trait_name != self.trait_name.to_lowercase() {
            return Err(ConfigError::Invalid(
                "trait_name must be lowercase and non-empty".into(),
            ));
        }
        self.provider
            .to_provider_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.teacher.to_spec(Some(&self.trait_name))?;
        if !(0.0..=1.0).contains(&self.gate.threshold) {
            return Err(ConfigError::Invalid(format!(
                "gate.threshold {} outside [0, 1]",
                self.gate.threshold
            )));
        }
        if let Some(kind) = &self.gate.dataset_kind {
            kind.parse::<crate::corpus::DatasetKind>()
                .map_err(ConfigError::Invalid)?;
        }
        if self.assembly.target_size == 0 {
            return Err(ConfigError::Invalid(
                "assembly.target_size must be positive".into(),
            ));
        }
        if self.finetune.enabled {
            self.finetune
                .to_spec("placeholder")
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.eval.samples_per_question == 0 {
            return Err(ConfigError::Invalid(
                "eval.samples_per_question must be positive".into(),
            ));
        }
        if !self.eval.temperature.is_finite() || self.eval.temperature < 0.0 {
            return Err(ConfigError::Invalid(
                "eval.temperature must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}
