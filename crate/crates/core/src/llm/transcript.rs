use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClientError, CompletionClient, CompletionRequest, Stage};

/// Hex SHA-256 of a prompt.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub stage: Stage,
    pub model: String,
    pub temperature: f64,
    pub prompt_hash: String,
    pub prompt: String,
    pub response: String,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

/// Append-only log of model calls, optionally mirrored to a JSONL file.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Mutex<Vec<TranscriptEntry>>,
    file: Mutex<Option<File>>,
}

impl Transcript {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Appends to `path`, creating parent directories as needed.
    pub fn to_file(path: &Path) -> io::Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Transcript {
            entries: Mutex::new(Vec::new()),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn record(&self, entry: TranscriptEntry) {
        if let Some(file) = self.file.lock().expect("transcript lock").as_mut() {
            let line = serde_json::to_string(&entry).expect("transcript entry serializes");
            if let Err(e) = writeln!(file, "{line}").and_then(|_| file.flush()) {
                log::warn!("could not append to transcript: {e}");
            }
        }
        self.entries.lock().expect("transcript lock").push(entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock").clone()
    }

    /// Reads a JSONL transcript. Malformed lines are skipped with a warning.
    pub fn load(path: &Path) -> io::Result<Vec<TranscriptEntry>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(entry) => out.push(entry),
                Err(e) => log::warn!(
                    "{}:{}: skipping transcript line: {e}",
                    path.display(),
                    i + 1
                ),
            }
        }
        Ok(out)
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Logs every successful call of the wrapped client.
pub struct Recording<C> {
    inner: C,
    transcript: Arc<Transcript>,
}

impl<C> Recording<C> {
    pub fn new(inner: C, transcript: Arc<Transcript>) -> Self {
        Recording { inner, transcript }
    }
}

impl<C: CompletionClient> CompletionClient for Recording<C> {
    fn model(&self) -> String {
        self.inner.model()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let response = self.inner.complete(request)?;
        self.transcript.record(TranscriptEntry {
            stage: request.stage,
            model: self.inner.model(),
            temperature: request.temperature,
            prompt_hash: prompt_hash(&request.prompt),
            prompt: request.prompt.clone(),
            response: response.clone(),
            timestamp: now(),
        });
        Ok(response)
    }
}

/// Answers from recorded transcripts; unseen prompts go to the fallback
/// client when one is configured.
pub struct Replay {
    responses: HashMap<(Stage, String), String>,
    fallback: Option<Box<dyn CompletionClient>>,
}

impl Replay {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut responses = HashMap::new();
        for e in entries {
            if !e.response.trim().is_empty() {
                responses
                    .entry((e.stage, e.prompt_hash))
                    .or_insert(e.response);
            }
        }
        Replay {
            responses,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, client: Box<dyn CompletionClient>) -> Self {
        self.fallback = Some(client);
        self
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl CompletionClient for Replay {
    fn model(&self) -> String {
        match &self.fallback {
            Some(f) => f.model(),
            None => "replay".into(),
        }
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let hash = prompt_hash(&request.prompt);
        if let Some(r) = self.responses.get(&(request.stage, hash.clone())) {
            return Ok(r.clone());
        }
        match &self.fallback {
            Some(f) => f.complete(request),
            None => Err(ClientError::ReplayMiss(hash)),
        }
    }
}
