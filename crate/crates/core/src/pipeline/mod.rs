//! Online generation: proactive analysis, hierarchical retrieval, prompt
//! assembly and augmented generation.

pub mod template;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CweId, Language};
use crate::graph::extract_api_calls;
use crate::index::fusion::{Facet, FusedCandidate, FusionParams};
use crate::index::{EmbeddingProvider, ExampleHit, KnowledgeBase, RetrievalQuery};
use crate::llm::{
    complete_nonempty, strip_code_fence, ClientError, CompletionClient, CompletionRequest,
    PromptStyle, Stage,
};
use crate::scalar::Scalar;
pub use template::{placeholders, render, TemplateError};

pub const ZERO_SHOT_CHAT: &str = include_str!("templates/zero_shot_chat.txt");
pub const CAUSE_ANALYSIS: &str = include_str!("templates/cause_analysis.txt");
pub const AUGMENTED_COMPLETION: &str = include_str!("templates/augmented_completion.txt");
pub const AUGMENTED_CHAT: &str = include_str!("templates/augmented_chat.txt");
/// Bumped whenever a template above changes.
pub const TEMPLATE_VERSION: u32 = 1;

/// A coding task: code to complete (signature, docstring, imports).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub language: Language,
    pub prompt: String,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}:{line}: {message}")]
    TaskFile {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("generation failed for task {task}: {source}")]
    Generation {
        task: String,
        #[source]
        source: ClientError,
    },
}

/// Reads tasks from JSONL, one object per line.
pub fn load_tasks(path: &Path) -> Result<Vec<Task>, PipelineError> {
    let err = |line, message: String| PipelineError::TaskFile {
        path: path.display().to_string(),
        line,
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(0, e.to_string()))?;
    let mut tasks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        tasks.push(serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?);
    }
    Ok(tasks)
}

/// Result of the pre-generation analysis of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProactiveAnalysis {
    pub task: Task,
    pub draft_code: String,
    pub draft_apis: Vec<String>,
    pub cause_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityContext {
    pub cwe_id: CweId,
    pub guideline: String,
    pub secure_example: String,
    pub example_id: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub draft_ms: f64,
    pub cause_ms: f64,
    pub retrieval_ms: f64,
    pub generation_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub task_id: String,
    pub sample: usize,
    pub analysis: ProactiveAnalysis,
    pub context: Option<SecurityContext>,
    /// Facets that took part in retrieval.
    pub facets: Vec<Facet>,
    pub cwe_shortlist: Vec<(CweId, f64)>,
    pub style: PromptStyle,
    pub template_version: u32,
    pub prompt: String,
    pub completion: String,
    pub timings: StageTimings,
    pub failures: Vec<StageFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct PipelineConfig<T> {
    pub style: PromptStyle,
    pub generation_temperature: f64,
    pub analysis_temperature: f64,
    pub cause_temperature: f64,
    pub top_k: usize,
    /// Secure examples placed in one prompt.
    pub examples_per_prompt: usize,
    pub samples: usize,
    pub fusion: FusionParams<T>,
    pub disabled_facets: BTreeSet<Facet>,
    /// When false, all stage timings are written as zero so records are
    /// byte-identical across runs.
    pub record_timings: bool,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        PipelineConfig {
            style: PromptStyle::Chat,
            generation_temperature: 0.2,
            analysis_temperature: 0.2,
            cause_temperature: 0.2,
            top_k: 4,
            examples_per_prompt: 1,
            samples: 1,
            fusion: FusionParams::default(),
            disabled_facets: BTreeSet::new(),
            record_timings: true,
        }
    }
}

/// Clients used by one pipeline run.
pub struct Clients<'a> {
    pub draft: &'a dyn CompletionClient,
    pub cause: &'a dyn CompletionClient,
    pub generate: &'a dyn CompletionClient,
    pub embedder: &'a dyn EmbeddingProvider,
}

/// Prompt sent for zero-shot generation: the raw task for completion
/// models, the instruction template for chat models.
pub fn zero_shot_prompt(task: &Task, style: PromptStyle) -> Result<String, TemplateError> {
    match style {
        PromptStyle::Completion => Ok(task.prompt.clone()),
        PromptStyle::Chat => render(
            ZERO_SHOT_CHAT,
            &[("lang", task.language.as_str()), ("code", &task.prompt)],
        ),
    }
}

/// Zero-shot draft of the task, code fences removed.
pub fn draft_generate(
    task: &Task,
    client: &dyn CompletionClient,
    style: PromptStyle,
    temperature: f64,
) -> Result<String, ClientError> {
    let prompt = zero_shot_prompt(task, style).map_err(|e| ClientError::Failed(e.to_string()))?;
    let reply = complete_nonempty(
        client,
        &CompletionRequest::new(Stage::Draft, prompt, style, temperature),
    )?;
    Ok(strip_code_fence(&reply))
}

pub fn cause_prompt(task: &Task) -> Result<String, TemplateError> {
    render(
        CAUSE_ANALYSIS,
        &[("lang", task.language.as_str()), ("code", &task.prompt)],
    )
}

/// One-paragraph description of the vulnerability the task is prone to.
pub fn analyze_cause(
    task: &Task,
    client: &dyn CompletionClient,
    temperature: f64,
) -> Result<String, ClientError> {
    let prompt = cause_prompt(task).map_err(|e| ClientError::Failed(e.to_string()))?;
    let reply = complete_nonempty(
        client,
        &CompletionRequest::new(Stage::CauseAnalysis, prompt, PromptStyle::Chat, temperature),
    )?;
    Ok(reply.trim().to_string())
}

/// Generation prompt with or without a security context.
pub fn assemble_prompt(
    task: &Task,
    context: Option<&SecurityContext>,
    style: PromptStyle,
) -> Result<String, TemplateError> {
    let Some(ctx) = context else {
        return zero_shot_prompt(task, style);
    };
    let lang = task.language.as_str();
    let vars = [
        ("security_guidelines", ctx.guideline.as_str()),
        ("language", lang),
        ("secure_code", ctx.secure_example.as_str()),
        ("lang", lang),
        ("code", task.prompt.as_str()),
    ];
    match style {
        PromptStyle::Completion => render(AUGMENTED_COMPLETION, &vars),
        PromptStyle::Chat => render(AUGMENTED_CHAT, &vars),
    }
}

fn millis(start: Instant, enabled: bool) -> f64 {
    if enabled {
        start.elapsed().as_secs_f64() * 1000.0
    } else {
        0.0
    }
}

/// Analysis plus retrieval outcome shared by all samples of a task.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct PreparedTask<T> {
    pub analysis: ProactiveAnalysis,
    pub context: Option<SecurityContext>,
    pub facets: Vec<Facet>,
    pub cwe_candidates: Vec<FusedCandidate<T>>,
    pub example_hits: Vec<ExampleHit<T>>,
    pub timings: StageTimings,
    pub failures: Vec<StageFailure>,
}

/// Runs draft generation, cause analysis and retrieval for `task`. Every
/// failure degrades the affected facets instead of aborting.
pub fn prepare_task<T: Scalar + Serialize + DeserializeOwned>(
    task: &Task,
    kb: Option<&KnowledgeBase<T>>,
    clients: &Clients<'_>,
    config: &PipelineConfig<T>,
) -> PreparedTask<T> {
    let mut failures = Vec::new();
    let mut fail = |stage: &str, message: String| {
        log::warn!("task {}: {stage} failed: {message}", task.id);
        failures.push(StageFailure {
            stage: stage.to_string(),
            message,
        });
    };
    let mut timings = StageTimings::default();
    let mut facets: BTreeSet<Facet> = Facet::ALL
        .iter()
        .copied()
        .filter(|f| !config.disabled_facets.contains(f))
        .collect();

    let start = Instant::now();
    let draft_code = match draft_generate(
        task,
        clients.draft,
        config.style,
        config.analysis_temperature,
    ) {
        Ok(code) => code,
        Err(e) => {
            fail("draft", e.to_string());
            String::new()
        }
    };
    let draft_apis = extract_api_calls(&draft_code, task.language).unwrap_or_else(|e| {
        fail("draft_apis", e.to_string());
        Vec::new()
    });
    timings.draft_ms = millis(start, config.record_timings);

    let start = Instant::now();
    let cause_text = match analyze_cause(task, clients.cause, config.cause_temperature) {
        Ok(text) => text,
        Err(e) => {
            fail("cause", e.to_string());
            String::new()
        }
    };
    timings.cause_ms = millis(start, config.record_timings);

    if draft_apis.is_empty() {
        facets.remove(&Facet::Api);
    }
    if cause_text.is_empty() {
        facets.remove(&Facet::Cause);
    }
    if draft_code.trim().is_empty() {
        facets.remove(&Facet::Code);
    }

    let start = Instant::now();
    let mut query = RetrievalQuery {
        language: Some(task.language),
        ..RetrievalQuery::default()
    };
    if facets.contains(&Facet::Api) {
        query.draft_apis = draft_apis.clone();
    }
    let mut texts = Vec::new();
    if facets.contains(&Facet::Cause) {
        texts.push(cause_text.clone());
    }
    if facets.contains(&Facet::Code) {
        texts.push(draft_code.clone());
    }
    if !texts.is_empty() {
        match clients.embedder.embed(&texts) {
            Ok(mut vectors) => {
                if facets.contains(&Facet::Code) {
                    query.code_vector = vectors.pop();
                }
                if facets.contains(&Facet::Cause) {
                    query.cause_vector = vectors.pop();
                }
            }
            Err(e) => {
                fail("embedding", e.to_string());
                facets.remove(&Facet::Cause);
                facets.remove(&Facet::Code);
            }
        }
    }

    let mut context = None;
    let mut cwe_candidates = Vec::new();
    let mut example_hits = Vec::new();
    if let Some(kb) = kb.filter(|kb| !kb.is_empty() && !facets.is_empty()) {
        match kb.retrieve_cwe(&query, config.top_k, &config.fusion) {
            Ok(cwes) => {
                let ids: Vec<CweId> = cwes
                    .iter()
                    .filter_map(|c| c.candidate_id.parse().ok())
                    .collect();
                cwe_candidates = cwes;
                let hits = kb.retrieve_examples(
                    &query,
                    &ids,
                    config.examples_per_prompt.max(1),
                    &config.fusion,
                );
                example_hits = hits.clone();
                if let Some(first) = hits.first() {
                    let slices: Vec<&str> = hits
                        .iter()
                        .map(|h| kb.examples[&h.example_id].secure_slice.as_str())
                        .collect();
                    let ids: Vec<&str> = hits.iter().map(|h| h.example_id.as_str()).collect();
                    context = Some(SecurityContext {
                        cwe_id: first.cwe_id,
                        guideline: kb.entries[&first.cwe_id].guideline.clone(),
                        secure_example: slices.join("\n\n"),
                        example_id: ids.join(","),
                    });
                }
            }
            Err(e) => fail("retrieval", e.to_string()),
        }
    }
    timings.retrieval_ms = millis(start, config.record_timings);

    PreparedTask {
        analysis: ProactiveAnalysis {
            task: task.clone(),
            draft_code,
            draft_apis,
            cause_text,
        },
        context,
        facets: facets.into_iter().collect(),
        cwe_candidates,
        example_hits,
        timings,
        failures,
    }
}

/// Runs the whole pipeline for one task and returns one record per sample.
/// The analysis is computed once and shared by all samples. Only a failing
/// generation client aborts the task.
pub fn run_task<T: Scalar + Serialize + DeserializeOwned>(
    task: &Task,
    kb: Option<&KnowledgeBase<T>>,
    clients: &Clients<'_>,
    config: &PipelineConfig<T>,
) -> Result<Vec<GenerationRecord>, PipelineError> {
    let prepared = prepare_task(task, kb, clients, config);
    let prompt = assemble_prompt(task, prepared.context.as_ref(), config.style)?;
    let shortlist: Vec<(CweId, f64)> = prepared
        .cwe_candidates
        .iter()
        .filter_map(|c| Some((c.candidate_id.parse().ok()?, c.fused_score.to_f64()?)))
        .collect();
    let mut records = Vec::with_capacity(config.samples);
    for sample in 0..config.samples.max(1) {
        let start = Instant::now();
        let request = CompletionRequest::new(
            Stage::Generate,
            prompt.clone(),
            config.style,
            config.generation_temperature,
        );
        let completion =
            clients
                .generate
                .complete(&request)
                .map_err(|source| PipelineError::Generation {
                    task: task.id.clone(),
                    source,
                })?;
        let mut timings = prepared.timings;
        timings.generation_ms = millis(start, config.record_timings);
        records.push(GenerationRecord {
            task_id: task.id.clone(),
            sample,
            analysis: prepared.analysis.clone(),
            context: prepared.context.clone(),
            facets: prepared.facets.clone(),
            cwe_shortlist: shortlist.clone(),
            style: config.style,
            template_version: TEMPLATE_VERSION,
            prompt: prompt.clone(),
            completion,
            timings,
            failures: prepared.failures.clone(),
        });
    }
    Ok(records)
}

/// Runs every task in parallel. Results keep the task order.
pub fn run_tasks<T: Scalar + Serialize + DeserializeOwned>(
    tasks: &[Task],
    kb: Option<&KnowledgeBase<T>>,
    clients: &Clients<'_>,
    config: &PipelineConfig<T>,
) -> Vec<Result<Vec<GenerationRecord>, PipelineError>> {
    tasks
        .par_iter()
        .map(|t| run_task(t, kb, clients, config))
        .collect()
}

/// Records as JSONL, one line per record.
pub fn records_to_jsonl(records: &[GenerationRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::HashEmbedder;
    use crate::llm::stub::{CountingClient, FailingClient, FixedClient, ScriptedClient};

    fn task() -> Task {
        Task {
            id: "t1".into(),
            language: Language::Python,
            prompt: "def load(path):\n    \"\"\"Load YAML config.\"\"\"\n".into(),
        }
    }

    #[test]
    fn templates_have_expected_placeholders() {
        assert_eq!(placeholders(ZERO_SHOT_CHAT), vec!["lang", "lang", "code"]);
        assert_eq!(placeholders(CAUSE_ANALYSIS), vec!["lang", "code"]);
        assert_eq!(
            placeholders(AUGMENTED_COMPLETION),
            vec![
                "security_guidelines",
                "language",
                "secure_code",
                "lang",
                "code"
            ]
        );
        assert!(AUGMENTED_CHAT.contains("You must not change the code snippet part"));
    }

    #[test]
    fn draft_passes_through_and_strips_fences() {
        let t = task();
        assert_eq!(
            draft_generate(&t, &FixedClient::new("x = 1"), PromptStyle::Chat, 0.2).unwrap(),
            "x = 1"
        );
        let fenced = FixedClient::new("```python\ncode\n```");
        assert_eq!(
            draft_generate(&t, &fenced, PromptStyle::Chat, 0.2).unwrap(),
            "code"
        );
        let raw = ScriptedClient::new(|r| Ok(r.prompt.clone()));
        assert_eq!(
            draft_generate(&t, &raw, PromptStyle::Completion, 0.2).unwrap(),
            t.prompt.trim_matches('\n')
        );
    }

    #[test]
    fn cause_analysis_reply() {
        let reply = "The potential vulnerability is related to an SQL Injection vulnerability.";
        assert!(analyze_cause(&task(), &FixedClient::new(reply), 0.2)
            .unwrap()
            .contains("SQL Injection"));
        assert_eq!(
            analyze_cause(&task(), &FixedClient::new(""), 0.2),
            Err(ClientError::EmptyResponse)
        );
    }

    #[test]
    fn zero_shot_without_context() {
        let t = task();
        assert_eq!(
            assemble_prompt(&t, None, PromptStyle::Completion).unwrap(),
            t.prompt
        );
        let chat = assemble_prompt(&t, None, PromptStyle::Chat).unwrap();
        assert!(chat.starts_with("Generate the following python code.\n\n### Code Snippet and Task Requirement\n```python\ndef load"));
    }

    #[test]
    fn braces_in_code_are_not_placeholders() {
        let mut t = task();
        t.prompt = "def f(name):\n    return f'{name}'\n".into();
        let ctx = SecurityContext {
            cwe_id: CweId::new(79),
            guideline: "- g {x}".into(),
            secure_example: "s".into(),
            example_id: "e".into(),
        };
        let p = assemble_prompt(&t, Some(&ctx), PromptStyle::Chat).unwrap();
        assert!(p.contains("return f'{name}'") && p.contains("- g {x}"));
    }

    #[test]
    fn empty_kb_degrades_to_zero_shot() {
        let t = task();
        let gen = CountingClient::new();
        let embedder = HashEmbedder::new(32);
        let clients = Clients {
            draft: &FixedClient::new("yaml.load(open(path))"),
            cause: &FixedClient::new("unsafe deserialization"),
            generate: &gen,
            embedder: &embedder,
        };
        let config = PipelineConfig::<f64> {
            samples: 3,
            ..Default::default()
        };
        let records = run_task::<f64>(&t, None, &clients, &config).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(gen.calls(), 3);
        assert!(records
            .iter()
            .all(|r| r.context.is_none() && r.analysis == records[0].analysis));
        assert_eq!(
            records[0].prompt,
            zero_shot_prompt(&t, PromptStyle::Chat).unwrap()
        );
        assert_eq!(records[0].analysis.draft_apis, vec!["yaml.load", "open"]);
    }

    #[test]
    fn failing_analysis_still_yields_records() {
        let t = task();
        let embedder = HashEmbedder::new(32);
        let failing = FailingClient::new("down");
        let clients = Clients {
            draft: &failing,
            cause: &failing,
            generate: &FixedClient::new("ok"),
            embedder: &embedder,
        };
        let records = run_task::<f64>(&t, None, &clients, &PipelineConfig::default()).unwrap();
        assert_eq!(records[0].failures.len(), 2);
        assert!(records[0].facets.is_empty());
        let clients = Clients {
            generate: &failing,
            ..clients
        };
        assert!(matches!(
            run_task::<f64>(&t, None, &clients, &PipelineConfig::default()),
            Err(PipelineError::Generation { .. })
        ));
    }
}
