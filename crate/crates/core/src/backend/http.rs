//! Client for OpenAI-compatible chat-completion endpoints.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::parse::parse_actions;
use super::prompt::TemplateId;
use super::{BackendError, PlanOutcome, Planner, TaoStep};
use crate::env::Question;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    /// Per-attempt timeout in seconds.
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Base delay before the first retry; doubles per retry.
    pub backoff_ms: u64,
    pub temperature: f64,
    pub system_prompt: Option<String>,
    pub template: TemplateId,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "PLANGRAPH_API_KEY".into(),
            timeout_secs: 30.0,
            max_retries: 2,
            max_in_flight: 4,
            backoff_ms: 200,
            temperature: 0.0,
            system_prompt: None,
            template: TemplateId::Synthetic,
        }
    }
}

impl HttpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(Error::Config("http backend needs an endpoint and a model".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config(format!("invalid http timeout {}", self.timeout_secs)));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// Counters shared by every call made through one client.
#[derive(Debug, Default)]
pub struct Telemetry {
    pub requests: AtomicU64,
    pub retries: AtomicU64,
    pub failures: AtomicU64,
}

/// Result of a successful call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fail(BackendError),
}

pub struct HttpClient {
    config: HttpConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    gate: Gate,
    telemetry: Telemetry,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("config", &self.config).finish_non_exhaustive()
    }
}

impl HttpClient {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: HttpConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| Error::Backend(BackendError::MissingCredential(config.api_key_env.clone())))?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: HttpConfig, api_key: String) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Backend(BackendError::Transport(e.to_string())))?;
        let gate = Gate { in_flight: Mutex::new(0), freed: Condvar::new(), limit: config.max_in_flight };
        Ok(Self { config, api_key, client, gate, telemetry: Telemetry::default() })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    /// Sends `prompt` as the user message and returns the first choice's
    /// content. 5xx, 429, timeouts and connection failures are retried with
    /// exponential backoff; the whole call, backoff included, never exceeds
    /// `timeout × (max_retries + 1)`.
    pub fn complete(&self, prompt: &str) -> std::result::Result<Completion, BackendError> {
        let _permit = self.gate.acquire();
        let per_attempt = self.config.timeout();
        let deadline = Instant::now() + per_attempt * (self.config.max_retries + 1);
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        let body = json!({"model": self.config.model, "messages": messages, "temperature": self.config.temperature});

        let mut last_error = BackendError::Timeout { attempts: 0 };
        for attempt in 0..=self.config.max_retries {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            if attempt > 0 {
                self.telemetry.retries.fetch_add(1, Ordering::Relaxed);
            }
            self.telemetry.requests.fetch_add(1, Ordering::Relaxed);
            match self.attempt(&body, per_attempt.min(remaining), attempt + 1) {
                Attempt::Done(text) => return Ok(Completion { text, retries: attempt }),
                Attempt::Fail(e) => {
                    self.telemetry.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(e);
                }
                Attempt::Retry(e) => last_error = e,
            }
            if attempt < self.config.max_retries {
                let backoff = Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << attempt.min(16)));
                let remaining = deadline.saturating_duration_since(Instant::now());
                std::thread::sleep(backoff.min(remaining));
            }
        }
        self.telemetry.failures.fetch_add(1, Ordering::Relaxed);
        Err(last_error)
    }

    fn attempt(&self, body: &serde_json::Value, timeout: Duration, attempts: u32) -> Attempt {
        let response =
            self.client.post(&self.config.endpoint).bearer_auth(&self.api_key).timeout(timeout).json(body).send();
        let response = match response {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts }),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        match status {
            200..=299 => match extract_content(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fail(e),
            },
            401 | 403 => Attempt::Fail(BackendError::Auth(status)),
            429 | 500..=599 => Attempt::Retry(BackendError::Server { status, attempts }),
            _ => Attempt::Fail(BackendError::Rejected { status, body: text.chars().take(200).collect() }),
        }
    }
}

fn extract_content(body: &str) -> std::result::Result<String, BackendError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(format!("invalid JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| BackendError::MalformedResponse("no choices[0].message.content".into()))
}

/// [`Planner`] backed by a live model: the completion's last `Finish[...]`
/// is the answer.
#[derive(Debug)]
pub struct HttpPlanner {
    client: HttpClient,
}

impl HttpPlanner {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }

    pub fn client(&self) -> &HttpClient {
        &self.client
    }
}

impl Planner for HttpPlanner {
    fn plan(&self, _question: &Question, prompt: &str) -> std::result::Result<PlanOutcome, BackendError> {
        let completion = self.client.complete(prompt)?;
        let actions = parse_actions(&completion.text);
        let answer = actions
            .iter()
            .rev()
            .find(|a| a.kind.eq_ignore_ascii_case("finish"))
            .map(|a| a.argument.clone())
            .unwrap_or_default();
        let trace = actions
            .into_iter()
            .map(|a| TaoStep {
                thought: String::new(),
                action: if a.argument.is_empty() { a.kind } else { format!("{}[{}]", a.kind, a.argument) },
                observation: String::new(),
                ok: true,
                corrupted: false,
            })
            .collect();
        Ok(PlanOutcome { answer, trace, reward: None })
    }

    fn template(&self) -> TemplateId {
        self.client.config.template
    }
}
