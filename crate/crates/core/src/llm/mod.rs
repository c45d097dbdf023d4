//! Text-completion clients shared by distillation and generation.
//!
//! Every model call goes through [`CompletionClient`]. Wrappers add retries,
//! rate limiting, transcript recording and replay; [`OfflineClient`] is a
//! deterministic heuristic model for runs without network access, and
//! [`stub`] holds small doubles for tests.

mod http;
mod offline;
pub mod stub;
mod transcript;

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpClient, HttpSettings, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
pub use offline::OfflineClient;
pub use transcript::{prompt_hash, Recording, Replay, Transcript, TranscriptEntry};

/// Prompt layout expected by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    /// Raw text continuation.
    Completion,
    /// Single user message.
    #[default]
    Chat,
}

/// What a call is for. Recorded in transcripts and used by the offline model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Guideline,
    GuidelineMerge,
    Cause,
    CauseMerge,
    Draft,
    CauseAnalysis,
    Generate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Guideline => "guideline",
            Stage::GuidelineMerge => "guideline_merge",
            Stage::Cause => "cause",
            Stage::CauseMerge => "cause_merge",
            Stage::Draft => "draft",
            Stage::CauseAnalysis => "cause_analysis",
            Stage::Generate => "generate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub stage: Stage,
    pub prompt: String,
    pub style: PromptStyle,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(
        stage: Stage,
        prompt: impl Into<String>,
        style: PromptStyle,
        temperature: f64,
    ) -> Self {
        CompletionRequest {
            stage,
            prompt: prompt.into(),
            style,
            temperature,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("no recorded response for prompt {0}")]
    ReplayMiss(String),
    #[error("{0}")]
    Failed(String),
}

impl ClientError {
    /// Errors worth another attempt.
    pub fn is_transient(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait CompletionClient: Send + Sync {
    /// Model label written to transcripts.
    fn model(&self) -> String;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

impl<C: CompletionClient + ?Sized> CompletionClient for Box<C> {
    fn model(&self) -> String {
        (**self).model()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

impl<C: CompletionClient + ?Sized> CompletionClient for std::sync::Arc<C> {
    fn model(&self) -> String {
        (**self).model()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

/// Calls `client`, retrying once when the reply is blank.
pub fn complete_nonempty(
    client: &dyn CompletionClient,
    request: &CompletionRequest,
) -> Result<String, ClientError> {
    for _ in 0..2 {
        let reply = client.complete(request)?;
        if !reply.trim().is_empty() {
            return Ok(reply);
        }
    }
    Err(ClientError::EmptyResponse)
}

/// Content of the last fenced code block in `text`.
///
/// A final fence line carrying a language tag opens a block that runs to the
/// end of the text.
pub fn last_fenced_block(text: &str) -> Option<&str> {
    let lines: Vec<(usize, &str)> = line_offsets(text);
    let fences: Vec<usize> = (0..lines.len())
        .filter(|i| lines[*i].1.trim_start().starts_with("```"))
        .collect();
    let &last = fences.last()?;
    let body_start = |i: usize| lines.get(i + 1).map_or(text.len(), |l| l.0);
    if lines[last].1.trim() == "```" && fences.len() >= 2 {
        let open = fences[fences.len() - 2];
        let (start, end) = (body_start(open), lines[last].0);
        Some(text[start.min(end)..end].trim_end_matches('\n'))
    } else {
        Some(text[body_start(last)..].trim_end_matches('\n'))
    }
}

/// Model output with a surrounding code fence removed: the first fenced
/// block when there is one, otherwise the text without leading and trailing
/// blank lines.
pub fn strip_code_fence(text: &str) -> String {
    let lines = line_offsets(text);
    let Some(open) = lines
        .iter()
        .position(|l| l.1.trim_start().starts_with("```"))
    else {
        return text.trim_matches('\n').to_string();
    };
    let start = lines.get(open + 1).map_or(text.len(), |l| l.0);
    let end = lines[open + 1..]
        .iter()
        .find(|l| l.1.trim() == "```")
        .map_or(text.len(), |l| l.0);
    text[start..end].trim_end_matches('\n').to_string()
}

fn line_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        out.push((offset, line.trim_end_matches(['\n', '\r'])));
        offset += line.len();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(16);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }
}

/// Retries transient failures with exponential backoff.
pub struct Retrying<C> {
    inner: C,
    policy: RetryPolicy,
}

impl<C> Retrying<C> {
    pub fn new(inner: C, policy: RetryPolicy) -> Self {
        Retrying { inner, policy }
    }
}

impl<C: CompletionClient> CompletionClient for Retrying<C> {
    fn model(&self) -> String {
        self.inner.model()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_transient() && attempt + 1 < self.policy.max_attempts.max(1) => {
                    let wait = self.policy.delay(attempt);
                    log::warn!(
                        "{} call failed ({e}); retrying in {wait:?}",
                        request.stage.as_str()
                    );
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Spaces calls at least `interval` apart across threads.
pub struct RateLimited<C> {
    inner: C,
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl<C> RateLimited<C> {
    pub fn per_minute(inner: C, calls_per_minute: u32) -> Self {
        let interval = if calls_per_minute == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / f64::from(calls_per_minute))
        };
        RateLimited {
            inner,
            interval,
            next_slot: Mutex::new(None),
        }
    }
}

impl<C: CompletionClient> CompletionClient for RateLimited<C> {
    fn model(&self) -> String {
        self.inner.model()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        if !self.interval.is_zero() {
            let wait = {
                let mut slot = self.next_slot.lock().expect("rate limiter lock");
                let now = Instant::now();
                let start = slot.map_or(now, |s| s.max(now));
                *slot = Some(start + self.interval);
                start - now
            };
            if !wait.is_zero() {
                thread::sleep(wait);
            }
        }
        self.inner.complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::stub::{FailingClient, ScriptedClient};
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn request() -> CompletionRequest {
        CompletionRequest::new(Stage::Draft, "p", PromptStyle::Chat, 0.0)
    }

    #[test]
    fn fences() {
        assert_eq!(strip_code_fence("```python\ncode\n```"), "code");
        assert_eq!(
            strip_code_fence("Here:\n```c\nint x;\nx++;\n```\nDone."),
            "int x;\nx++;"
        );
        assert_eq!(strip_code_fence("\nx = 1\n"), "x = 1");
        assert_eq!(strip_code_fence("```python\nopen"), "open");
        assert_eq!(
            last_fenced_block("a\n```py\none\n```\n```py\ntwo\n```\n"),
            Some("two")
        );
        assert_eq!(
            last_fenced_block("# H\n```python\ndef f():\n"),
            Some("def f():")
        );
        assert_eq!(last_fenced_block("none"), None);
    }

    #[test]
    fn retries_transient_errors() {
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let flaky = ScriptedClient::new(move |_| {
            if seen.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ClientError::Http {
                    status: 503,
                    body: String::new(),
                })
            } else {
                Ok("ok".into())
            }
        });
        let policy = RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 1,
            max_delay_ms: 1,
        };
        let client = Retrying::new(flaky, policy);
        assert_eq!(client.complete(&request()).unwrap(), "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let policy = RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 1,
            max_delay_ms: 1,
        };
        let client = Retrying::new(FailingClient::new("boom"), policy);
        assert_eq!(
            client.complete(&request()),
            Err(ClientError::Failed("boom".into()))
        );
    }

    #[test]
    fn blank_reply_is_retried_once() {
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let client = ScriptedClient::new(move |_| {
            seen.fetch_add(1, Ordering::SeqCst);
            Ok("  \n".into())
        });
        assert_eq!(
            complete_nonempty(&client, &request()),
            Err(ClientError::EmptyResponse)
        );
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn rate_limit_spaces_calls() {
        let client = RateLimited::per_minute(ScriptedClient::new(|_| Ok("x".into())), 60_000);
        let start = Instant::now();
        for _ in 0..5 {
            client.complete(&request()).unwrap();
        }
        assert!(start.elapsed() >= Duration::from_millis(4));
    }
}
