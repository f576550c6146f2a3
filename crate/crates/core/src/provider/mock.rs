//! Deterministic scripted provider for offline runs and tests.
//!
//! Responses are keyed by a request fingerprint — a hash of the system
//! prompt, the user message, and the sample index within the request —
//! so completions depend only on request content, never on arrival order
//! across concurrent workers. Two script forms exist:
//!
//! * `exact` entries pin one fingerprint to an ordered response list,
//!   consumed via an atomic cursor (cycling once exhausted). Repeat
//!   requests with the same fingerprint, like a judge re-ask, see
//!   successive entries.
//! * `rules` match on substrings of the system prompt, user message, or
//!   model id and serve from a pool addressed by the fingerprint, so a
//!   given request always gets the same response. Rules with `cycle`
//!   set advance a per-fingerprint cursor instead: repeats of one
//!   request walk the pool, and the multiset they receive is
//!   deterministic under any scheduling.
//!
//! Pool and response strings may contain `{sentence}`, replaced with the
//! last nonempty line of the user message.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    ChatRequest, Completion, FineTuneJob, FineTuneSpec, FineTuneStatus, FinishReason, Provider,
    ProviderError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailKind {
    Transient,
    Auth,
}

/// Scripted failure: the first `times` consumptions fail (every one when
/// `times` is absent), after which responses are served normally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailSpec {
    #[serde(default)]
    pub times: Option<u32>,
    pub kind: FailKind,
}

impl FailSpec {
    fn applies(&self, consumption: u32) -> bool {
        match self.times {
            None => true,
            Some(times) => consumption < times,
        }
    }

    fn error(&self) -> ProviderError {
        match self.kind {
            FailKind::Transient => ProviderError::Transient("scripted transient failure".into()),
            FailKind::Auth => ProviderError::Auth("scripted auth failure".into()),
        }
    }

    fn skipped(&self) -> u32 {
        self.times.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExactEntry {
    #[serde(default)]
    pub system: Option<String>,
    pub user: String,
    #[serde(default)]
    pub index: u32,
    #[serde(default)]
    pub responses: Vec<String>,
    #[serde(default)]
    pub fail: Option<FailSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    #[serde(default)]
    pub system_contains: Option<String>,
    #[serde(default)]
    pub user_contains: Option<String>,
    #[serde(default)]
    pub model_contains: Option<String>,
    #[serde(default)]
    pub pool: Vec<String>,
    /// Walk the pool on repeated identical requests instead of always
    /// answering with the same entry.
    #[serde(default)]
    pub cycle: bool,
    #[serde(default)]
    pub fail: Option<FailSpec>,
}

impl RuleEntry {
    fn matches(&self, req: &ChatRequest) -> bool {
        let system_ok = match &self.system_contains {
            Some(needle) => req
                .system_prompt
                .as_deref()
                .is_some_and(|s| s.contains(needle)),
            None => true,
        };
        let user_ok = match &self.user_contains {
            Some(needle) => req.user_message.contains(needle),
            None => true,
        };
        let model_ok = match &self.model_contains {
            Some(needle) => req.model.contains(needle),
            None => true,
        };
        system_ok && user_ok && model_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineTuneOutcome {
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneScript {
    #[serde(default = "default_outcome")]
    pub outcome: FineTuneOutcome,
    /// Number of non-terminal statuses served before the terminal one
    /// (0 = terminal immediately, 2 = queued then running).
    #[serde(default = "default_transitions")]
    pub transitions: u32,
    /// When set, `create_finetune` fails with this provider message.
    #[serde(default)]
    pub create_error: Option<String>,
}

fn default_outcome() -> FineTuneOutcome {
    FineTuneOutcome::Succeeded
}

fn default_transitions() -> u32 {
    2
}

impl Default for FineTuneScript {
    fn default() -> Self {
        Self {
            outcome: default_outcome(),
            transitions: default_transitions(),
            create_error: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    /// Artificial per-request latency, useful for observing concurrency.
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub exact: Vec<ExactEntry>,
    #[serde(default)]
    pub rules: Vec<RuleEntry>,
    #[serde(default)]
    pub finetune: FineTuneScript,
}

impl MockScript {
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            ProviderError::InvalidRequest(format!(
                "bad mock script {}: {e}",
                path.display()
            ))
        })
    }
}

/// Fingerprint of (system prompt, user message, sample index). FNV-1a
/// with field separators; stable across runs and platforms.
pub fn fingerprint(system: Option<&str>, user: &str, index: u32) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    };
    match system {
        Some(s) => {
            eat(b"S:");
            eat(s.as_bytes());
        }
        None => eat(b"S-"),
    }
    eat(b"\x1fU:");
    eat(user.as_bytes());
    eat(b"\x1fI:");
    eat(&index.to_le_bytes());
    hash
}

/// One logged outbound request, for assertions on wire behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRequest {
    pub system_prompt: Option<String>,
    pub user_message: String,
    pub n_samples: u32,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub model: String,
}

#[derive(Debug, Clone)]
pub struct UploadRecord {
    pub reference: String,
    pub filename: String,
    pub n_bytes: usize,
}

struct JobState {
    spec: FineTuneSpec,
    step: u32,
    result_model: String,
}

pub struct MockProvider {
    script: MockScript,
    /// fingerprint -> exact entry index (first entry wins).
    exact_index: HashMap<u64, usize>,
    exact_cursors: Vec<AtomicU32>,
    rule_cursors: Mutex<HashMap<(usize, u64), u32>>,
    log: Mutex<Vec<LoggedRequest>>,
    uploads: Mutex<Vec<UploadRecord>>,
    jobs: Mutex<HashMap<String, JobState>>,
    upload_seq: AtomicU32,
    job_seq: AtomicU32,
    in_flight: AtomicUsize,
    high_water: AtomicUsize,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        let mut exact_index = HashMap::new();
        let mut exact_cursors = Vec::with_capacity(script.exact.len());
        for (i, entry) in script.exact.iter().enumerate() {
            let fp = fingerprint(entry.system.as_deref(), &entry.user, entry.index);
            exact_index.entry(fp).or_insert(i);
            exact_cursors.push(AtomicU32::new(0));
        }
        Self {
            script,
            exact_index,
            exact_cursors,
            rule_cursors: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            uploads: Mutex::new(Vec::new()),
            jobs: Mutex::new(HashMap::new()),
            upload_seq: AtomicU32::new(0),
            job_seq: AtomicU32::new(0),
            in_flight: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
        }
    }

    pub fn from_script_file(path: &Path) -> Result<Self, ProviderError> {
        Ok(Self::new(MockScript::from_file(path)?))
    }

    pub fn request_log(&self) -> Vec<LoggedRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    /// Highest number of requests observed in flight at once.
    pub fn high_water_mark(&self) -> usize {
        self.high_water.load(Ordering::SeqCst)
    }

    pub fn uploads(&self) -> Vec<UploadRecord> {
        self.uploads.lock().unwrap().clone()
    }

    pub fn finetune_count(&self) -> usize {
        self.jobs.lock().unwrap().len()
    }

    fn substitute(template: &str, user: &str) -> String {
        if !template.contains("{sentence}") {
            return template.to_string();
        }
        let sentence = user
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .trim();
        template.replace("{sentence}", sentence)
    }

    fn resolve(&self, req: &ChatRequest, index: u32) -> Result<String, ProviderError> {
        let fp = fingerprint(req.system_prompt.as_deref(), &req.user_message, index);
        if let Some(&entry_idx) = self.exact_index.get(&fp) {
            let entry = &self.script.exact[entry_idx];
            let consumption = self.exact_cursors[entry_idx].fetch_add(1, Ordering::SeqCst);
            if let Some(fail) = &entry.fail {
                if fail.applies(consumption) {
                    return Err(fail.error());
                }
                let effective = consumption - fail.skipped();
                return self.pick(&entry.responses, effective as usize, req, fp);
            }
            return self.pick(&entry.responses, consumption as usize, req, fp);
        }
        for (rule_idx, rule) in self.script.rules.iter().enumerate() {
            if !rule.matches(req) {
                continue;
            }
            let needs_cursor = rule.cycle || rule.fail.is_some();
            let consumption = if needs_cursor {
                let mut cursors = self.rule_cursors.lock().unwrap();
                let slot = cursors.entry((rule_idx, fp)).or_insert(0);
                let current = *slot;
                *slot += 1;
                current
            } else {
                0
            };
            if let Some(fail) = &rule.fail {
                if fail.applies(consumption) {
                    return Err(fail.error());
                }
            }
            let skipped = rule.fail.as_ref().map(|f| f.skipped()).unwrap_or(0);
            let offset = if rule.cycle {
                (fp as usize).wrapping_add((consumption - skipped) as usize)
            } else {
                fp as usize
            };
            return self.pick_offset(&rule.pool, offset, req);
        }
        Err(ProviderError::Unscripted(format!(
            "no exact entry or rule matches request (user message starts {:?})",
            req.user_message.chars().take(40).collect::<String>()
        )))
    }

    fn pick(
        &self,
        responses: &[String],
        position: usize,
        req: &ChatRequest,
        fp: u64,
    ) -> Result<String, ProviderError> {
        if responses.is_empty() {
            return Err(ProviderError::Unscripted(format!(
                "exact entry for fingerprint {fp:#x} has no responses"
            )));
        }
        Ok(Self::substitute(
            &responses[position % responses.len()],
            &req.user_message,
        ))
    }

    fn pick_offset(
        &self,
        pool: &[String],
        offset: usize,
        req: &ChatRequest,
    ) -> Result<String, ProviderError> {
        if pool.is_empty() {
            return Err(ProviderError::Unscripted("rule pool is empty".into()));
        }
        Ok(Self::substitute(
            &pool[offset % pool.len()],
            &req.user_message,
        ))
    }

    fn job_status(&self, state: &JobState) -> (FineTuneStatus, Option<String>) {
        if state.step >= self.script.finetune.transitions {
            match self.script.finetune.outcome {
                FineTuneOutcome::Succeeded => (
                    FineTuneStatus::Succeeded,
                    Some(state.result_model.clone()),
                ),
                FineTuneOutcome::Failed => (FineTuneStatus::Failed, None),
            }
        } else if state.step == 0 {
            (FineTuneStatus::Queued, None)
        } else {
            (FineTuneStatus::Running, None)
        }
    }

    fn job_payload(spec: &FineTuneSpec) -> serde_json::Value {
        serde_json::json!({
            "model": spec.base_model,
            "training_file": spec.training_file_ref,
            "hyperparameters": {
                "n_epochs": spec.n_epochs,
                "learning_rate_multiplier": spec.learning_rate_multiplier,
                "batch_size": spec.batch_size,
            },
            "suffix": spec.suffix,
        })
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &ChatRequest) -> Result<Vec<Completion>, ProviderError> {
        req.validate()?;
        self.log.lock().unwrap().push(LoggedRequest {
            system_prompt: req.system_prompt.clone(),
            user_message: req.user_message.clone(),
            n_samples: req.n_samples,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            model: req.model.clone(),
        });

        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.high_water.fetch_max(now, Ordering::SeqCst);
        let result = (|| {
            if self.script.latency_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.script.latency_ms));
            }
            let mut completions = Vec::with_capacity(req.n_samples as usize);
            for index in 0..req.n_samples {
                let text = self.resolve(req, index)?;
                completions.push(Completion {
                    text,
                    finish_reason: FinishReason::Stop,
                    model: req.model.clone(),
                });
            }
            Ok(completions)
        })();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn upload_file(&self, filename: &str, bytes: &[u8]) -> Result<String, ProviderError> {
        let seq = self.upload_seq.fetch_add(1, Ordering::SeqCst) + 1;
        let reference = format!("mockfile-{seq:04}");
        self.uploads.lock().unwrap().push(UploadRecord {
            reference: reference.clone(),
            filename: filename.to_string(),
            n_bytes: bytes.len(),
        });
        Ok(reference)
    }

    fn create_finetune(&self, spec: &FineTuneSpec) -> Result<FineTuneJob, ProviderError> {
        if let Some(message) = &self.script.finetune.create_error {
            return Err(ProviderError::Rejected(message.clone()));
        }
        let seq = self.job_seq.fetch_add(1, Ordering::SeqCst) + 1;
        let id = format!("ftjob-mock-{seq:04}");
        let result_model = if spec.suffix.is_empty() {
            format!("ft:mock-{seq}")
        } else {
            format!("ft:mock:{}", spec.suffix)
        };
        let state = JobState {
            spec: spec.clone(),
            step: 0,
            result_model,
        };
        let (status, result_model) = self.job_status(&state);
        let raw = Self::job_payload(&state.spec);
        self.jobs.lock().unwrap().insert(id.clone(), state);
        Ok(FineTuneJob {
            id,
            status,
            result_model,
            raw,
        })
    }

    fn get_finetune(&self, job_id: &str) -> Result<FineTuneJob, ProviderError> {
        let mut jobs = self.jobs.lock().unwrap();
        let state = jobs.get_mut(job_id).ok_or_else(|| {
            ProviderError::Rejected(format!("unknown fine-tune job '{job_id}'"))
        })?;
        state.step = state.step.saturating_add(1);
        let (status, result_model) = self.job_status(state);
        Ok(FineTuneJob {
            id: job_id.to_string(),
            status,
            result_model,
            raw: Self::job_payload(&state.spec),
        })
    }
}
