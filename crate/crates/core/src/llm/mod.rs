//! Chat-completion access for the strategist and the benchmark agents: an
//! OpenAI-compatible HTTP client, a scripted mock, bounded retries, and a
//! redacted exchange log.

mod mock;
mod openai;
mod parse;
pub mod prompts;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::MockBackend;
pub use openai::OpenAiBackend;
pub use parse::{
    extract_json_block, parse_directive, parse_directive_in, serialize_directive, ParseError,
};

/// Endpoint base URL, e.g. `https://api.openai.com/v1`.
pub const ENV_ENDPOINT: &str = "LUMINA_LLM_ENDPOINT";
/// Bearer credential. Never logged.
pub const ENV_API_KEY: &str = "LUMINA_LLM_API_KEY";
pub const ENV_MODEL: &str = "LUMINA_LLM_MODEL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("credential rejected (HTTP {0})")]
    AuthFailure(u16),
    #[error("rate limited")]
    RateLimited,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server error (HTTP {0})")]
    Server(u16),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("LLM backend not configured: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl LlmError {
    /// Worth another attempt.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            LlmError::Timeout
                | LlmError::RateLimited
                | LlmError::Transport(_)
                | LlmError::Server(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
}

impl ChatRequest {
    pub fn new(
        model_name: impl Into<String>,
        system_prompt: impl Into<String>,
        user: impl Into<String>,
    ) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            messages: vec![ChatMessage::user(user)],
            temperature: 0.0,
            max_tokens: 1024,
            model_name: model_name.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One attempt at a completion.
pub trait ChatBackend {
    fn send(&mut self, req: &ChatRequest) -> Result<String, LlmError>;

    /// Model identifier for manifests.
    fn model_name(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        RetryPolicy {
            base_delay_ms: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (1-based): base * 2^(retry-1).
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(1u64 << (retry - 1).min(16)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// 1 on first-try success.
    pub attempts: u32,
    pub latency: Duration,
}

#[derive(Debug, Serialize)]
struct ExchangeRecord<'a> {
    model: &'a str,
    system_prompt: &'a str,
    messages: &'a [ChatMessage],
    reply: Option<&'a str>,
    error: Option<String>,
    attempts: u32,
    latency_ms: u128,
}

/// Appends request/response pairs as JSON lines with secrets scrubbed.
#[derive(Debug)]
pub struct ExchangeLog {
    file: File,
    secrets: Vec<String>,
}

impl ExchangeLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let secrets = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|s| !s.is_empty())
            .into_iter()
            .collect();
        Ok(ExchangeLog { file, secrets })
    }

    pub fn with_secret(mut self, secret: impl Into<String>) -> Self {
        self.secrets.push(secret.into());
        self
    }

    pub fn redact(&self, text: &str) -> String {
        let mut out = text.to_string();
        for s in &self.secrets {
            out = out.replace(s.as_str(), "[REDACTED]");
        }
        out
    }

    fn write(
        &mut self,
        req: &ChatRequest,
        result: &Result<Completion, LlmError>,
        attempts: u32,
        latency: Duration,
    ) {
        let reply = result.as_ref().ok().map(|c| c.text.as_str());
        let rec = ExchangeRecord {
            model: &req.model_name,
            system_prompt: &req.system_prompt,
            messages: &req.messages,
            reply,
            error: result.as_ref().err().map(|e| e.to_string()),
            attempts,
            latency_ms: latency.as_millis(),
        };
        let line = serde_json::to_string(&rec).expect("exchange record serializes");
        if let Err(e) = writeln!(self.file, "{}", self.redact(&line)) {
            log::warn!("could not write LLM exchange log: {e}");
        }
    }
}

/// A backend plus retry policy and optional exchange log.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    pub retry: RetryPolicy,
    log: Option<ExchangeLog>,
    retries_total: u32,
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>, retry: RetryPolicy) -> Self {
        Gateway {
            backend,
            retry,
            log: None,
            retries_total: 0,
        }
    }

    pub fn with_log(mut self, log: ExchangeLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn model_name(&self) -> String {
        self.backend.model_name()
    }

    /// Retries performed over the gateway's lifetime.
    pub fn retries(&self) -> u32 {
        self.retries_total
    }

    /// Sends the request, retrying transient failures with exponential
    /// backoff up to the policy's limit.
    pub fn complete(&mut self, req: &ChatRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let start = Instant::now();
        let mut attempt = 0;
        let result = loop {
            attempt += 1;
            match self.backend.send(req) {
                Ok(text) => {
                    break Ok(Completion {
                        text,
                        attempts: attempt,
                        latency: start.elapsed(),
                    })
                }
                Err(e) if e.is_transient() && attempt <= self.retry.max_retries => {
                    let wait = self.retry.delay(attempt);
                    log::warn!("LLM attempt {attempt} failed ({e}); retrying in {wait:?}");
                    self.retries_total += 1;
                    std::thread::sleep(wait);
                }
                Err(e) => break Err(e),
            }
        };
        if let Some(log) = self.log.as_mut() {
            log.write(req, &result, attempt, start.elapsed());
        }
        result
    }
}

/// Live backend settings read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
}

impl LlmSettings {
    pub fn from_env() -> Result<Self, LlmError> {
        let get = |k: &str| {
            std::env::var(k)
                .ok()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| LlmError::Config(format!("{k} is not set")))
        };
        Ok(LlmSettings {
            endpoint: get(ENV_ENDPOINT)?,
            api_key: get(ENV_API_KEY)?,
            model: get(ENV_MODEL)?,
        })
    }
}
