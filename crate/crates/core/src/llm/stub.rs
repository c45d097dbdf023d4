//! Deterministic client doubles for tests and fault injection.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{ClientError, CompletionClient, CompletionRequest, Stage};

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct FixedClient {
    text: String,
}

impl FixedClient {
    pub fn new(text: impl Into<String>) -> Self {
        FixedClient { text: text.into() }
    }
}

impl CompletionClient for FixedClient {
    fn model(&self) -> String {
        "fixed".into()
    }

    fn complete(&self, _request: &CompletionRequest) -> Result<String, ClientError> {
        Ok(self.text.clone())
    }
}

/// Counts calls per stage and answers `"<stage> <n>"`.
#[derive(Debug, Clone, Default)]
pub struct CountingClient {
    total: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<Stage>>>,
}

impl CountingClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, stage: Stage) -> usize {
        self.log
            .lock()
            .expect("log lock")
            .iter()
            .filter(|s| **s == stage)
            .count()
    }

    pub fn reset(&self) {
        self.total.store(0, Ordering::SeqCst);
        self.log.lock().expect("log lock").clear();
    }
}

impl CompletionClient for CountingClient {
    fn model(&self) -> String {
        "counting".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let n = self.total.fetch_add(1, Ordering::SeqCst) + 1;
        self.log.lock().expect("log lock").push(request.stage);
        Ok(format!("{} {n}", request.stage.as_str()))
    }
}

/// Fails every call with a permanent error.
#[derive(Debug, Clone)]
pub struct FailingClient {
    message: String,
}

impl FailingClient {
    pub fn new(message: impl Into<String>) -> Self {
        FailingClient {
            message: message.into(),
        }
    }
}

impl CompletionClient for FailingClient {
    fn model(&self) -> String {
        "failing".into()
    }

    fn complete(&self, _request: &CompletionRequest) -> Result<String, ClientError> {
        Err(ClientError::Failed(self.message.clone()))
    }
}

type Script = dyn Fn(&CompletionRequest) -> Result<String, ClientError> + Send + Sync;

/// Answers through a closure.
pub struct ScriptedClient {
    script: Box<Script>,
}

impl ScriptedClient {
    pub fn new(
        script: impl Fn(&CompletionRequest) -> Result<String, ClientError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedClient {
            script: Box::new(script),
        }
    }
}

impl CompletionClient for ScriptedClient {
    fn model(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        (self.script)(request)
    }
}
