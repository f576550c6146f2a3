//! Gateway wrapping a [`Provider`] with the request-concurrency bound,
//! retry with exponential backoff, and local precondition checks.
//!
//! All outbound calls acquire a permit from an internal limiter, so no
//! more than `max_concurrent_requests` provider calls are ever in flight
//! regardless of how many workers issue them. Transient failures (HTTP
//! 429/5xx, timeouts, scripted transients) are retried up to
//! `retry.max_attempts` with nondecreasing backoff; auth failures are
//! never retried.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{
    ChatRequest, Completion, FineTuneJob, FineTuneSpec, Provider, ProviderConfig, ProviderError,
    RetryPolicy,
};

struct Limiter {
    available: Mutex<usize>,
    signal: Condvar,
}

impl Limiter {
    fn new(cap: usize) -> Self {
        Self {
            available: Mutex::new(cap),
            signal: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterPermit<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.signal.wait(available).unwrap();
        }
        *available -= 1;
        LimiterPermit { limiter: self }
    }
}

struct LimiterPermit<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterPermit<'_> {
    fn drop(&mut self) {
        let mut available = self.limiter.available.lock().unwrap();
        *available += 1;
        self.limiter.signal.notify_one();
    }
}

/// Counters accumulated over the gateway's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GatewaySnapshot {
    pub requests: u64,
    pub attempts: u64,
    pub retries: u64,
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    limiter: Limiter,
    retry: RetryPolicy,
    workers: usize,
    requests: AtomicU64,
    attempts: AtomicU64,
    retries: AtomicU64,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, config: &ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        Ok(Self {
            provider,
            limiter: Limiter::new(config.max_concurrent_requests),
            retry: config.retry.clone(),
            workers: config.max_concurrent_requests,
            requests: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        })
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn stats(&self) -> GatewaySnapshot {
        GatewaySnapshot {
            requests: self.requests.load(Ordering::SeqCst),
            attempts: self.attempts.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
        }
    }

    fn with_retry<T>(
        &self,
        mut call: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut last_message = String::new();
        for attempt in 1..=self.retry.max_attempts {
            let delay = self.retry.delay_before(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            self.attempts.fetch_add(1, Ordering::SeqCst);
            match call() {
                Ok(value) => {
                    if attempt > 1 {
                        log::info!("request succeeded on attempt {attempt}");
                    }
                    return Ok(value);
                }
                Err(err) if err.is_transient() && attempt < self.retry.max_attempts => {
                    log::warn!("transient failure on attempt {attempt}: {err}");
                    self.retries.fetch_add(1, Ordering::SeqCst);
                    last_message = err.to_string();
                }
                Err(err) if err.is_transient() => {
                    return Err(ProviderError::RetriesExhausted {
                        attempts: self.retry.max_attempts,
                        last: err.to_string(),
                    });
                }
                Err(err) => return Err(err),
            }
        }
        Err(ProviderError::RetriesExhausted {
            attempts: self.retry.max_attempts,
            last: last_message,
        })
    }

    /// Issue one chat request, returning exactly `req.n_samples`
    /// completions in provider order.
    pub fn complete(&self, req: &ChatRequest) -> Result<Vec<Completion>, ProviderError> {
        req.validate()?;
        let _permit = self.limiter.acquire();
        let completions = self.with_retry(|| self.provider.complete(req))?;
        if completions.len() != req.n_samples as usize {
            return Err(ProviderError::MalformedResponse(format!(
                "expected {} completions, provider returned {}",
                req.n_samples,
                completions.len()
            )));
        }
        Ok(completions)
    }

    /// Upload a prompt-completion training file. The file is validated
    /// locally (nonempty, every line a `{"prompt", "completion"}` object)
    /// before any network call.
    pub fn upload_training_file(&self, path: &Path) -> Result<String, ProviderError> {
        let bytes = std::fs::read(path)?;
        let n_pairs = validate_training_bytes(&bytes)
            .map_err(|e| ProviderError::InvalidRequest(format!("{}: {e}", path.display())))?;
        let filename = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "training.jsonl".to_string());
        log::info!(
            "uploading training file {} ({n_pairs} pairs, {} bytes)",
            path.display(),
            bytes.len()
        );
        let _permit = self.limiter.acquire();
        self.with_retry(|| self.provider.upload_file(&filename, &bytes))
    }

    pub fn create_finetune(&self, spec: &FineTuneSpec) -> Result<FineTuneJob, ProviderError> {
        spec.validate()?;
        let _permit = self.limiter.acquire();
        self.with_retry(|| self.provider.create_finetune(spec))
    }

    /// Block until the job reaches a terminal status, sleeping
    /// `poll_interval` between polls. Failed or cancelled jobs are
    /// returned as values, not errors.
    pub fn poll_finetune(
        &self,
        job_id: &str,
        poll_interval: Duration,
    ) -> Result<FineTuneJob, ProviderError> {
        loop {
            let job = {
                let _permit = self.limiter.acquire();
                self.with_retry(|| self.provider.get_finetune(job_id))?
            };
            if job.status.is_terminal() {
                return Ok(job);
            }
            log::debug!("fine-tune {job_id} status {:?}", job.status);
            if !poll_interval.is_zero() {
                std::thread::sleep(poll_interval);
            }
        }
    }

    /// Fan a function out over `items` with a worker pool sized to the
    /// concurrency bound. Results are returned in input order regardless
    /// of completion order.
    pub fn map_bounded<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync,
    {
        let n = items.len();
        if n == 0 {
            return Vec::new();
        }
        let workers = self.workers.min(n).max(1);
        if workers == 1 {
            return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
        }
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let result = f(i, &items[i]);
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
            .collect()
    }
}

/// Minimal structural check of prompt-completion JSON Lines bytes.
/// Returns the number of pairs.
pub fn validate_training_bytes(bytes: &[u8]) -> Result<usize, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("not UTF-8: {e}"))?;
    let mut n_pairs = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed)
            .map_err(|e| format!("line {}: invalid JSON: {e}", idx + 1))?;
        let object = value
            .as_object()
            .ok_or_else(|| format!("line {}: record is not an object", idx + 1))?;
        for field in ["prompt", "completion"] {
            if !object.get(field).is_some_and(|v| v.is_string()) {
                return Err(format!("line {}: missing string field '{field}'", idx + 1));
            }
        }
        n_pairs += 1;
    }
    if n_pairs == 0 {
        return Err("training file contains no pairs".into());
    }
    Ok(n_pairs)
}
