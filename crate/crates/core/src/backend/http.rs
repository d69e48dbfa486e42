use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Deserialize;

use super::{BackendConfig, BackendError, ChatBackend, ChatExchange, FinishReason};
use crate::prompt::PromptBundle;

const EXCERPT_CHARS: usize = 300;

/// Lowercase fragments that chat servers use to report an oversized prompt.
const OVERFLOW_HINTS: &[&str] = &[
    "context_length_exceeded",
    "maximum context length",
    "context length",
    "context window",
    "too many tokens",
    "prompt is too long",
    "exceeds the model",
];

/// Waits between retries. Tests substitute a recording clock.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    sleeper: Arc<dyn Sleeper>,
}

enum Attempt {
    Done(ChatExchange),
    Retry(String),
    Fail(BackendError),
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}

fn is_overflow(status: u16, body: &str) -> bool {
    if !matches!(status, 400 | 413 | 422) {
        return false;
    }
    let lower = body.to_lowercase();
    OVERFLOW_HINTS.iter().any(|h| lower.contains(h))
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        Self::with_sleeper(config, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(config: BackendConfig, sleeper: Arc<dyn Sleeper>) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            config,
            client,
            sleeper,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, body: &[u8], request: &super::ChatRequest, attempt: u32) -> Attempt {
        let mut builder = self
            .client
            .post(self.config.endpoint())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let started = Instant::now();
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(format!("timeout: {e}")),
            Err(e) => return Attempt::Retry(format!("request error: {e}")),
        };
        let status = response.status().as_u16();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        if status == 429 || (500..600).contains(&status) {
            return Attempt::Retry(format!("HTTP {status}: {}", excerpt(&text)));
        }
        if !(200..300).contains(&status) {
            if is_overflow(status, &text) {
                return Attempt::Fail(BackendError::ContextOverflow(excerpt(&text)));
            }
            return Attempt::Fail(BackendError::Api {
                status,
                body_excerpt: excerpt(&text),
            });
        }
        let parsed: WireResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fail(BackendError::InvalidResponse(format!("{e}: {}", excerpt(&text)))),
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Attempt::Fail(BackendError::InvalidResponse("no choices".into()));
        };
        Attempt::Done(ChatExchange {
            request: request.clone(),
            response_text: choice.message.content.unwrap_or_default(),
            latency_ms,
            attempt_count: attempt,
            finish_reason: FinishReason::from_wire(choice.finish_reason.as_deref()),
        })
    }
}

impl ChatBackend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<ChatExchange, BackendError> {
        let request = self.config.request(bundle);
        let body = request.to_bytes();
        let max_attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                let wait = self.config.backoff_for(attempt - 1);
                debug!("retrying {} in {:?} (attempt {attempt})", self.config.model_name, wait);
                self.sleeper.sleep(wait);
            }
            match self.attempt(&body, &request, attempt) {
                Attempt::Done(exchange) => return Ok(exchange),
                Attempt::Fail(err) => return Err(err),
                Attempt::Retry(reason) => {
                    warn!(
                        "{} attempt {attempt}/{max_attempts} failed: {reason}",
                        self.config.model_name
                    );
                    last = reason;
                }
            }
        }
        Err(BackendError::Transport {
            attempts: max_attempts,
            message: last,
        })
    }
}
