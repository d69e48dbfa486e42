use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatExchange, ChatRequest, FinishReason};
use crate::prompt::PromptBundle;

/// Returns `completion` when the final user message contains `contains`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: String,
    pub completion: String,
}

impl MockRule {
    pub fn new(contains: impl Into<String>, completion: impl Into<String>) -> Self {
        Self {
            contains: contains.into(),
            completion: completion.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedExchange {
    /// Call order across all threads.
    pub seq: u64,
    pub final_user_message: String,
    pub demo_ids: Vec<String>,
    pub prompt_chars: usize,
    pub completion: Option<String>,
}

/// Deterministic backend: first matching rule wins, otherwise the default.
#[derive(Debug)]
pub struct MockBackend {
    model_name: String,
    rules: Vec<MockRule>,
    default_completion: String,
    /// Prompts longer than this many characters overflow.
    context_limit: Option<usize>,
    seq: AtomicU64,
    log: Mutex<Vec<RecordedExchange>>,
}

impl MockBackend {
    pub fn new(rules: Vec<MockRule>, default_completion: impl Into<String>) -> Self {
        Self {
            model_name: "mock".into(),
            rules,
            default_completion: default_completion.into(),
            context_limit: None,
            seq: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_model_name(mut self, name: impl Into<String>) -> Self {
        self.model_name = name.into();
        self
    }

    pub fn with_context_limit(mut self, chars: Option<usize>) -> Self {
        self.context_limit = chars;
        self
    }

    /// Snapshot of every call so far, ordered by `seq`.
    pub fn exchanges(&self) -> Vec<RecordedExchange> {
        let mut log = self.log.lock().expect("mock log poisoned").clone();
        log.sort_by_key(|e| e.seq);
        log
    }

    fn lookup(&self, user: &str) -> &str {
        self.rules
            .iter()
            .find(|r| user.contains(&r.contains))
            .map_or(self.default_completion.as_str(), |r| r.completion.as_str())
    }
}

impl ChatBackend for MockBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<ChatExchange, BackendError> {
        let seq = self.seq.fetch_add(1, Ordering::SeqCst);
        let user = bundle.final_user_message();
        let prompt_chars = bundle.char_len();
        let overflow = self.context_limit.is_some_and(|limit| prompt_chars > limit);
        let completion = (!overflow).then(|| self.lookup(user).to_string());
        self.log.lock().expect("mock log poisoned").push(RecordedExchange {
            seq,
            final_user_message: user.to_string(),
            demo_ids: bundle.demo_ids.clone(),
            prompt_chars,
            completion: completion.clone(),
        });
        let Some(response_text) = completion else {
            return Err(BackendError::ContextOverflow(format!(
                "prompt of {prompt_chars} characters exceeds the mock limit of {}",
                self.context_limit.unwrap_or_default()
            )));
        };
        Ok(ChatExchange {
            request: ChatRequest {
                model: self.model_name.clone(),
                messages: bundle.messages.clone(),
                temperature: 0.0,
                max_tokens: 0,
                seed: None,
            },
            response_text,
            latency_ms: 0,
            attempt_count: 1,
            finish_reason: FinishReason::Stop,
        })
    }
}
