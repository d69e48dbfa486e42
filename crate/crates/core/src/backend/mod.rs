//! Chat-completions backends: an OpenAI-compatible HTTP client and a
//! deterministic rule-based mock.

mod http;
mod mock;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, Sleeper, ThreadSleeper};
pub use mock::{MockBackend, MockRule, RecordedExchange};

use crate::prompt::{Message, PromptBundle};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body_excerpt}")]
    Api { status: u16, body_excerpt: String },
    #[error("prompt exceeds the model context: {0}")]
    ContextOverflow(String),
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl FinishReason {
    fn from_wire(reason: Option<&str>) -> Self {
        match reason {
            None | Some("stop") | Some("eos") | Some("end_turn") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        }
    }
}

/// Connection and decoding settings for one model endpoint. The API key is
/// never serialized.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_secs: f64,
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_seed: Option<u64>,
}

fn default_max_output_tokens() -> u32 {
    512
}
fn default_timeout() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff() -> f64 {
    1.0
}

impl BackendConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            request_timeout_secs: default_timeout(),
            max_retries: default_max_retries(),
            retry_backoff_secs: default_backoff(),
            api_key: None,
            request_seed: None,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// Wait before retry number `retry` (1-based): `backoff · 2^(retry−1)`.
    pub fn backoff_for(&self, retry: u32) -> Duration {
        let factor = 2f64.powi(retry.saturating_sub(1) as i32);
        Duration::from_secs_f64((self.retry_backoff_secs * factor).max(0.0))
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(BackendError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return Err(BackendError::InvalidConfig("request_timeout_secs must be > 0".into()));
        }
        if self.retry_backoff_secs < 0.0 || !self.retry_backoff_secs.is_finite() {
            return Err(BackendError::InvalidConfig("retry_backoff_secs must be >= 0".into()));
        }
        if self.model_name.is_empty() {
            return Err(BackendError::InvalidConfig("model_name is empty".into()));
        }
        Ok(())
    }

    pub fn request(&self, bundle: &PromptBundle) -> ChatRequest {
        ChatRequest {
            model: self.model_name.clone(),
            messages: bundle.messages.clone(),
            temperature: self.temperature,
            max_tokens: self.max_output_tokens,
            seed: self.request_seed,
        }
    }
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendConfig")
            .field("base_url", &self.base_url)
            .field("model_name", &self.model_name)
            .field("temperature", &self.temperature)
            .field("max_output_tokens", &self.max_output_tokens)
            .field("request_timeout_secs", &self.request_timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("retry_backoff_secs", &self.retry_backoff_secs)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("request_seed", &self.request_seed)
            .finish()
    }
}

/// Chat-completions request body. Field order is fixed so identical inputs
/// serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub finish_reason: FinishReason,
}

/// Anything that can answer a rendered prompt. Handles are shared across
/// worker threads.
pub trait ChatBackend: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, bundle: &PromptBundle) -> Result<ChatExchange, BackendError>;
}

/// One-shot helper: builds an HTTP backend for `config` and sends `bundle`.
pub fn complete(config: &BackendConfig, bundle: &PromptBundle) -> Result<ChatExchange, BackendError> {
    HttpBackend::new(config.clone())?.complete(bundle)
}
