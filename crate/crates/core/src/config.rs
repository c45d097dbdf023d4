//! Run configuration shared by the command-line tool and library users.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::distill::DistillOptions;
use crate::index::fusion::{Facet, FusionParams, Thresholds};
use crate::index::{EmbedError, EmbeddingProvider, HashEmbedder, HttpEmbedder};
use crate::llm::{
    ClientError, CompletionClient, HttpClient, HttpSettings, OfflineClient, PromptStyle,
    RateLimited, RetryPolicy, Retrying,
};
use crate::pipeline::PipelineConfig;

/// Which model answers one kind of request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// `offline` for the built-in deterministic model, `http` for an
    /// OpenAI-compatible endpoint.
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub style: PromptStyle,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            provider: "offline".into(),
            model: "offline".into(),
            temperature: 0.2,
            style: PromptStyle::Chat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// `hash` for feature hashing, `http` for an embeddings endpoint.
    pub provider: String,
    pub model: String,
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: "hash".into(),
            model: "hash".into(),
            dim: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub kb_dir: PathBuf,
    pub hop_limit: usize,
    pub batch_size: usize,
    pub top_k: usize,
    pub examples_per_prompt: usize,
    pub thresholds: Thresholds<f64>,
    pub alpha: f64,
    pub rank_cap: usize,
    pub samples: usize,
    /// Concurrent requests per provider.
    pub concurrency: usize,
    /// Zero disables rate limiting.
    pub requests_per_minute: u32,
    pub retries: u32,
    pub disabled_facets: BTreeSet<Facet>,
    pub record_timings: bool,
    pub summarizer: ClientConfig,
    pub draft: ClientConfig,
    pub cause: ClientConfig,
    pub generator: ClientConfig,
    pub embedding: EmbeddingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            kb_dir: PathBuf::from("kb"),
            hop_limit: 2,
            batch_size: 10,
            top_k: 4,
            examples_per_prompt: 1,
            thresholds: Thresholds::default(),
            alpha: 60.0,
            rank_cap: 10,
            samples: 1,
            concurrency: 4,
            requests_per_minute: 0,
            retries: RetryPolicy::default().max_attempts,
            disabled_facets: BTreeSet::new(),
            record_timings: true,
            summarizer: ClientConfig::default(),
            draft: ClientConfig::default(),
            cause: ClientConfig::default(),
            generator: ClientConfig::default(),
            embedding: EmbeddingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn fusion(&self) -> FusionParams<f64> {
        FusionParams {
            thresholds: self.thresholds,
            alpha: self.alpha,
            rank_cap: self.rank_cap,
        }
    }

    pub fn distill_options(&self) -> DistillOptions {
        DistillOptions {
            batch_size: self.batch_size,
            temperature: self.summarizer.temperature,
            style: self.summarizer.style,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig<f64> {
        PipelineConfig {
            style: self.generator.style,
            generation_temperature: self.generator.temperature,
            analysis_temperature: self.draft.temperature,
            cause_temperature: self.cause.temperature,
            top_k: self.top_k,
            examples_per_prompt: self.examples_per_prompt,
            samples: self.samples,
            fusion: self.fusion(),
            disabled_facets: self.disabled_facets.clone(),
            record_timings: self.record_timings,
        }
    }

    /// Client for `stage`, wrapped with retries and the optional rate limit.
    /// HTTP credentials come from the environment only.
    pub fn client(&self, stage: &ClientConfig) -> Result<Box<dyn CompletionClient>, ClientError> {
        let policy = RetryPolicy {
            max_attempts: self.retries.max(1),
            ..RetryPolicy::default()
        };
        let inner: Box<dyn CompletionClient> = match stage.provider.as_str() {
            "offline" => return Ok(Box::new(OfflineClient)),
            "http" => Box::new(HttpClient::new(HttpSettings::from_env(&stage.model)?)?),
            other => {
                return Err(ClientError::Failed(format!(
                    "unknown client provider `{other}`"
                )))
            }
        };
        let retrying = Retrying::new(inner, policy);
        if self.requests_per_minute > 0 {
            Ok(Box::new(RateLimited::per_minute(
                retrying,
                self.requests_per_minute,
            )))
        } else {
            Ok(Box::new(retrying))
        }
    }

    pub fn embedder(&self) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        match self.embedding.provider.as_str() {
            "hash" => Ok(Box::new(HashEmbedder::new(self.embedding.dim))),
            "http" => Ok(Box::new(HttpEmbedder::new(
                HttpSettings::from_env(&self.embedding.model)?,
                self.embedding.dim,
            )?)),
            other => Err(EmbedError::Provider(ClientError::Failed(format!(
                "unknown embedding provider `{other}`"
            )))),
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers so that parallel work
/// inside it (distillation, task generation) respects the concurrency limit.
pub fn bounded<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a thread pool ({e}); using the global pool");
            f()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(
            (c.hop_limit, c.batch_size, c.top_k, c.rank_cap),
            (2, 10, 4, 10)
        );
        assert_eq!(c.alpha, 60.0);
        assert_eq!(
            (c.thresholds.api, c.thresholds.cause, c.thresholds.code),
            (4.0, 0.75, 0.65)
        );
        assert_eq!(c.generator.temperature, 0.2);
        assert_eq!(c.fusion(), FusionParams::default());
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"top_k": 7, "generator": {"style": "completion"}}"#).unwrap();
        assert_eq!(c.top_k, 7);
        assert_eq!(c.generator.style, PromptStyle::Completion);
        assert_eq!(c.generator.temperature, 0.2);
        assert_eq!(c.hop_limit, 2);
        assert!(serde_json::from_str::<RunConfig>(r#"{"api_key": "x"}"#).is_err());
    }

    #[test]
    fn unknown_provider() {
        let c = RunConfig::default();
        let stage = ClientConfig {
            provider: "nope".into(),
            ..ClientConfig::default()
        };
        assert!(c.client(&stage).is_err());
        assert_eq!(c.client(&c.generator).unwrap().model(), "offline");
        assert_eq!(c.embedder().unwrap().identity(), "hash-bow-256");
    }
}
