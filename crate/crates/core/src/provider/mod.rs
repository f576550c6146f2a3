//! Uniform access to chat-completion and fine-tuning providers.
//!
//! [`Provider`] is the low-level wire abstraction with two implementations:
//! [`http::HttpProvider`] speaks the OpenAI-compatible REST surface and
//! [`mock::MockProvider`] serves scripted responses for offline tests. The
//! [`gateway::Gateway`] wraps either one with a request-concurrency bound,
//! retry with exponential backoff, and local precondition checks.

pub mod gateway;
pub mod http;
pub mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use gateway::{Gateway, GatewaySnapshot};
pub use mock::{MockProvider, MockScript};

/// A single chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: Option<String>,
    pub user_message: String,
    pub temperature: f64,
    pub n_samples: u32,
    pub max_tokens: Option<u32>,
    pub model: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.n_samples < 1 {
            return Err(ProviderError::InvalidRequest(
                "n_samples must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        if self.model.is_empty() {
            return Err(ProviderError::InvalidRequest("model id is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

/// One completion from the provider. `text` is always present; an empty
/// string is allowed and gets flagged downstream by the artifact filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub model: String,
}

/// Retry schedule for transient failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 500,
            backoff_multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_attempts < 1 {
            return Err(ProviderError::InvalidRequest(
                "retry.max_attempts must be at least 1".into(),
            ));
        }
        if self.backoff_multiplier < 1.0 {
            return Err(ProviderError::InvalidRequest(
                "retry.backoff_multiplier must be at least 1.0".into(),
            ));
        }
        Ok(())
    }

    /// Delay to sleep before the given attempt (attempts are 1-based; the
    /// first attempt has no delay). Delays are nondecreasing because the
    /// multiplier is at least 1.
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        let factor = self.backoff_multiplier.powi(attempt as i32 - 2);
        Duration::from_millis((self.initial_backoff_ms as f64 * factor).round() as u64)
    }
}

/// Provider connection settings. The API key is only ever named by the
/// environment variable that holds it, never stored in config values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub max_concurrent_requests: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_concurrent_requests: 8,
            retry: RetryPolicy::default(),
            timeout_secs: 120,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_concurrent_requests < 1 {
            return Err(ProviderError::InvalidRequest(
                "max_concurrent_requests must be at least 1".into(),
            ));
        }
        self.retry.validate()
    }
}

/// Fine-tuning job parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneSpec {
    pub training_file_ref: String,
    pub base_model: String,
    pub n_epochs: u32,
    pub learning_rate_multiplier: f64,
    pub batch_size: u32,
    pub suffix: String,
}

impl FineTuneSpec {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.n_epochs < 1 {
            return Err(ProviderError::InvalidRequest(
                "n_epochs must be at least 1".into(),
            ));
        }
        if self.batch_size < 1 {
            return Err(ProviderError::InvalidRequest(
                "batch_size must be at least 1".into(),
            ));
        }
        if self.training_file_ref.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "training_file_ref is empty".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineTuneStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl FineTuneStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            FineTuneStatus::Succeeded | FineTuneStatus::Failed | FineTuneStatus::Cancelled
        )
    }
}

/// A fine-tuning job as reported by the provider. `result_model` is
/// present exactly when the status is `Succeeded`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneJob {
    pub id: String,
    pub status: FineTuneStatus,
    pub result_model: Option<String>,
    pub raw: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider rejected request: {0}")]
    Rejected(String),
    #[error("no scripted response: {0}")]
    Unscripted(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transient(_))
    }
}

/// Low-level provider operations. Implementations must be safe for
/// concurrent use; the gateway issues calls from multiple workers.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    /// Issue one chat-completion request, returning exactly
    /// `req.n_samples` completions in provider order.
    fn complete(&self, req: &ChatRequest) -> Result<Vec<Completion>, ProviderError>;

    /// Upload training-file bytes, returning the provider file reference.
    fn upload_file(&self, filename: &str, bytes: &[u8]) -> Result<String, ProviderError>;

    fn create_finetune(&self, spec: &FineTuneSpec) -> Result<FineTuneJob, ProviderError>;

    fn get_finetune(&self, job_id: &str) -> Result<FineTuneJob, ProviderError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retry_delays_are_nondecreasing() {
        let policy = RetryPolicy {
            max_attempts: 5,
            initial_backoff_ms: 100,
            backoff_multiplier: 2.0,
        };
        assert_eq!(policy.delay_before(1), Duration::ZERO);
        assert_eq!(policy.delay_before(2), Duration::from_millis(100));
        assert_eq!(policy.delay_before(3), Duration::from_millis(200));
        assert_eq!(policy.delay_before(4), Duration::from_millis(400));
        let mut last = Duration::ZERO;
        for attempt in 1..=5 {
            let delay = policy.delay_before(attempt);
            assert!(delay >= last);
            last = delay;
        }
    }

    #[test]
    fn request_validation() {
        let mut req = ChatRequest {
            system_prompt: None,
            user_message: "hi".into(),
            temperature: 1.0,
            n_samples: 1,
            max_tokens: None,
            model: "m".into(),
        };
        assert!(req.validate().is_ok());
        req.n_samples = 0;
        assert!(req.validate().is_err());
        req.n_samples = 1;
        req.temperature = f64::NAN;
        assert!(req.validate().is_err());
    }

    #[test]
    fn finetune_spec_validation() {
        let mut spec = FineTuneSpec {
            training_file_ref: "file-1".into(),
            base_model: "m".into(),
            n_epochs: 10,
            learning_rate_multiplier: 0.1,
            batch_size: 66,
            suffix: String::new(),
        };
        assert!(spec.validate().is_ok());
        spec.n_epochs = 0;
        assert!(spec.validate().is_err());
    }
}
