//! OpenAI-compatible HTTP provider.
//!
//! Speaks `/v1/chat/completions`, `/v1/files`, and `/v1/fine_tuning/jobs`
//! against any base URL. The API key is resolved from the environment
//! variable named in the config; it never appears in config values or on
//! disk. Retry is the gateway's job — this layer only classifies errors
//! as transient or not.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    ChatRequest, Completion, FineTuneJob, FineTuneSpec, FineTuneStatus, FinishReason, Provider,
    ProviderConfig, ProviderError,
};

pub struct HttpProvider {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            ProviderError::Auth(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::InvalidRequest(format!("http client: {e}")))?;
        Ok(Self {
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    fn classify(status: reqwest::StatusCode, body: &str) -> ProviderError {
        let summary = format!("HTTP {status}: {}", body.chars().take(300).collect::<String>());
        if status == reqwest::StatusCode::UNAUTHORIZED
            || status == reqwest::StatusCode::FORBIDDEN
        {
            ProviderError::Auth(summary)
        } else if status == reqwest::StatusCode::TOO_MANY_REQUESTS
            || status == reqwest::StatusCode::REQUEST_TIMEOUT
            || status.is_server_error()
        {
            ProviderError::Transient(summary)
        } else {
            ProviderError::Rejected(summary)
        }
    }

    fn transport_error(err: reqwest::Error) -> ProviderError {
        // Timeouts and connection drops are retryable.
        ProviderError::Transient(format!("transport: {err}"))
    }

    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<String, ProviderError> {
        let response = self
            .client
            .post(format!("{}{path}", self.base_url))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(Self::transport_error)?;
        Self::read_body(response)
    }

    fn read_body(response: reqwest::blocking::Response) -> Result<String, ProviderError> {
        let status = response.status();
        let text = response.text().map_err(Self::transport_error)?;
        if !status.is_success() {
            return Err(Self::classify(status, &text));
        }
        Ok(text)
    }

    fn map_job(payload: &str) -> Result<FineTuneJob, ProviderError> {
        #[derive(Deserialize)]
        struct JobResponse {
            id: String,
            status: String,
            #[serde(default)]
            fine_tuned_model: Option<String>,
        }
        let raw: serde_json::Value = serde_json::from_str(payload)
            .map_err(|e| ProviderError::MalformedResponse(format!("job payload: {e}")))?;
        let job: JobResponse = serde_json::from_value(raw.clone())
            .map_err(|e| ProviderError::MalformedResponse(format!("job fields: {e}")))?;
        let status = match job.status.as_str() {
            "validating_files" | "queued" | "pending" => FineTuneStatus::Queued,
            "running" | "fine_tuning" => FineTuneStatus::Running,
            "succeeded" => FineTuneStatus::Succeeded,
            "failed" => FineTuneStatus::Failed,
            "cancelled" | "canceled" => FineTuneStatus::Cancelled,
            other => {
                return Err(ProviderError::MalformedResponse(format!(
                    "unknown fine-tune status '{other}'"
                )))
            }
        };
        let result_model = if status == FineTuneStatus::Succeeded {
            Some(job.fine_tuned_model.ok_or_else(|| {
                ProviderError::MalformedResponse(
                    "succeeded job is missing fine_tuned_model".into(),
                )
            })?)
        } else {
            None
        };
        Ok(FineTuneJob {
            id: job.id,
            status,
            result_model,
            raw,
        })
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &ChatRequest) -> Result<Vec<Completion>, ProviderError> {
        #[derive(Deserialize)]
        struct ChatResponse {
            #[serde(default)]
            model: Option<String>,
            choices: Vec<Choice>,
        }
        #[derive(Deserialize)]
        struct Choice {
            message: Message,
            #[serde(default)]
            finish_reason: Option<String>,
        }
        #[derive(Deserialize)]
        struct Message {
            #[serde(default)]
            content: Option<String>,
        }

        let mut messages = Vec::new();
        if let Some(system) = &req.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": req.user_message}));
        let mut body = json!({
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
            "n": req.n_samples,
        });
        if let Some(max_tokens) = req.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }

        let text = self.post_json("/v1/chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::MalformedResponse(format!("chat payload: {e}")))?;
        let model = parsed.model.unwrap_or_else(|| req.model.clone());
        Ok(parsed
            .choices
            .into_iter()
            .map(|choice| Completion {
                text: choice.message.content.unwrap_or_default(),
                finish_reason: match choice.finish_reason.as_deref() {
                    Some("stop") => FinishReason::Stop,
                    Some("length") => FinishReason::Length,
                    _ => FinishReason::Other,
                },
                model: model.clone(),
            })
            .collect())
    }

    fn upload_file(&self, filename: &str, bytes: &[u8]) -> Result<String, ProviderError> {
        #[derive(Deserialize)]
        struct FileResponse {
            id: String,
        }
        let part = reqwest::blocking::multipart::Part::bytes(bytes.to_vec())
            .file_name(filename.to_string())
            .mime_str("application/jsonl")
            .map_err(|e| ProviderError::InvalidRequest(format!("multipart: {e}")))?;
        let form = reqwest::blocking::multipart::Form::new()
            .text("purpose", "fine-tune")
            .part("file", part);
        let response = self
            .client
            .post(format!("{}/v1/files", self.base_url))
            .bearer_auth(&self.api_key)
            .multipart(form)
            .send()
            .map_err(Self::transport_error)?;
        let text = Self::read_body(response)?;
        let parsed: FileResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::MalformedResponse(format!("file payload: {e}")))?;
        Ok(parsed.id)
    }

    fn create_finetune(&self, spec: &FineTuneSpec) -> Result<FineTuneJob, ProviderError> {
        let mut body = json!({
            "training_file": spec.training_file_ref,
            "model": spec.base_model,
            "hyperparameters": {
                "n_epochs": spec.n_epochs,
                "learning_rate_multiplier": spec.learning_rate_multiplier,
                "batch_size": spec.batch_size,
            },
        });
        if !spec.suffix.is_empty() {
            body["suffix"] = json!(spec.suffix);
        }
        let text = self.post_json("/v1/fine_tuning/jobs", &body)?;
        Self::map_job(&text)
    }

    fn get_finetune(&self, job_id: &str) -> Result<FineTuneJob, ProviderError> {
        let response = self
            .client
            .get(format!("{}/v1/fine_tuning/jobs/{job_id}", self.base_url))
            .bearer_auth(&self.api_key)
            .send()
            .map_err(Self::transport_error)?;
        let text = Self::read_body(response)?;
        Self::map_job(&text)
    }
}
