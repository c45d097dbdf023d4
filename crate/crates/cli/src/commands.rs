use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::Args;
use serde::Serialize;

use seckb::config::{bounded, RunConfig};
use seckb::corpus::{corpus_hash, load_corpus, write_corpus, write_rejected, CweId, Language};
use seckb::distill::{build_entries, cluster};
use seckb::index::{CachedEmbedder, EmbeddingProvider, KbError, KbLayout, KnowledgeBase, Manifest};
use seckb::llm::{ClientError, CompletionClient, Recording, Replay, Transcript};
use seckb::metrics::{aggregate, load_verdicts, MetricError};
use seckb::pipeline::{load_tasks, prepare_task, records_to_jsonl, run_tasks, Clients, Task};
use seckb::slicer::slice_corpus;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const CLIENT: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
    /// The message was already printed.
    pub quiet: bool,
}

type Outcome = Result<(), Failure>;

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
        quiet: false,
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    fail(USAGE, e)
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    fail(DATA, e)
}

fn client(e: impl Into<anyhow::Error>) -> Failure {
    fail(CLIENT, e)
}

fn kb_failure(e: KbError) -> Failure {
    match e {
        KbError::ProviderMismatch { .. } | KbError::Embed(_) => client(e),
        _ => data(e),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))
            .map_err(data)?;
    }
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(data)
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("output serializes")
    );
}

/// Marks the built index as stale so `index` must run again before retrieval.
fn invalidate_index(manifest: &mut Manifest) {
    manifest.embedding_provider = None;
    manifest.embedding_dim = None;
}

fn remove_if_present(path: &Path) -> Result<(), Failure> {
    let result = if path.is_dir() {
        fs::remove_dir_all(path)
    } else if path.exists() {
        fs::remove_file(path)
    } else {
        Ok(())
    };
    result
        .with_context(|| format!("cannot remove {}", path.display()))
        .map_err(data)
}

pub fn ingest(config: &RunConfig, corpus: Option<PathBuf>) -> Outcome {
    let input = corpus.or_else(|| config.corpus.clone()).ok_or_else(|| {
        usage(anyhow!(
            "no corpus given; pass --corpus or set `corpus` in the configuration"
        ))
    })?;
    let loaded = load_corpus(&input).map_err(data)?;
    let report = &loaded.report;
    for m in &report.malformed {
        log::warn!("{}:{}: {}", input.display(), m.line, m.message);
    }
    if !report.rejected.is_empty() {
        let path = write_rejected(&input, report).map_err(data)?;
        eprintln!(
            "{} records failed validation; see {}",
            report.rejected.len(),
            path.display()
        );
    }

    let layout = KbLayout::new(&config.kb_dir);
    let hash = corpus_hash(&loaded.instances);
    let previous = layout.read_manifest().ok();
    if previous.as_ref().is_some_and(|m| m.corpus_hash != hash) {
        log::info!("corpus changed; removing derived artifacts");
        for path in [
            layout.slices_dir(),
            layout.cwe_root(),
            layout.cause_vectors(),
            layout.code_vectors(),
            layout.api_index(),
            layout.example_api_index(),
        ] {
            remove_if_present(&path)?;
        }
    }
    write_corpus(&layout.corpus(), &loaded.instances).map_err(data)?;
    let manifest = match previous {
        Some(m) if m.corpus_hash == hash => m,
        _ => Manifest::new(hash, loaded.instances.len()),
    };
    layout.write_manifest(&manifest).map_err(kb_failure)?;
    println!(
        "ingested {} instances ({} read, {} duplicates, {} empty, {} unsupported language, {} malformed, {} rejected)",
        loaded.instances.len(),
        report.records_read,
        report.duplicates_removed,
        report.empty_dropped,
        report.unsupported_language,
        report.malformed.len(),
        report.rejected.len()
    );
    Ok(())
}

pub fn slice(config: &RunConfig) -> Outcome {
    if config.hop_limit == 0 {
        return Err(usage(anyhow!("the hop limit must be at least 1")));
    }
    let layout = KbLayout::new(&config.kb_dir);
    let mut manifest = layout.read_manifest().map_err(kb_failure)?;
    let corpus = layout.read_corpus().map_err(kb_failure)?;
    let results = bounded(config.concurrency, || {
        slice_corpus(&corpus, config.hop_limit)
    });
    layout.clear_slices().map_err(kb_failure)?;
    let (mut written, mut failed, mut ratio_sum) = (0usize, 0usize, 0.0);
    for (instance, result) in corpus.iter().zip(results) {
        match result {
            Ok(pair) => {
                ratio_sum += pair.kept_ratio();
                layout.write_slice(&pair).map_err(kb_failure)?;
                written += 1;
            }
            Err(e) => {
                log::warn!("{}: {e}", instance.id);
                failed += 1;
            }
        }
    }
    manifest.hop_limit = Some(config.hop_limit);
    invalidate_index(&mut manifest);
    layout.write_manifest(&manifest).map_err(kb_failure)?;
    let mean = if written == 0 {
        0.0
    } else {
        ratio_sum / written as f64
    };
    println!(
        "sliced {written} pairs with h = {} ({failed} failed), mean kept ratio {mean:.3}",
        config.hop_limit
    );
    Ok(())
}

pub fn distill(config: &RunConfig, force: bool) -> Outcome {
    if config.batch_size < 2 {
        return Err(usage(anyhow!("the batch size must be at least 2")));
    }
    let layout = KbLayout::new(&config.kb_dir);
    let mut manifest = layout.read_manifest().map_err(kb_failure)?;
    let corpus = layout.read_corpus().map_err(kb_failure)?;
    let clusters = cluster(&corpus);
    let existing = if layout.cwe_root().exists() {
        layout.read_entries().map_err(kb_failure)?
    } else {
        BTreeMap::new()
    };
    let stale: Vec<CweId> = existing
        .keys()
        .filter(|c| !clusters.contains_key(c))
        .copied()
        .collect();
    for cwe in &stale {
        remove_if_present(&layout.cwe_dir(*cwe))?;
    }
    fs::create_dir_all(layout.cwe_root())
        .with_context(|| format!("cannot create {}", layout.cwe_root().display()))
        .map_err(data)?;
    let total = clusters.len();
    let same_batch = manifest.batch_size == Some(config.batch_size);
    let todo: BTreeMap<CweId, Vec<_>> = clusters
        .into_iter()
        .filter(|(cwe, members)| {
            force
                || !same_batch
                || existing.get(cwe).is_none_or(|e| {
                    e.member_ids
                        .iter()
                        .map(String::as_str)
                        .ne(members.iter().map(|m| m.id.as_str()))
                })
        })
        .collect();
    let skipped = total - todo.len();
    if todo.is_empty() {
        if !stale.is_empty() {
            invalidate_index(&mut manifest);
            layout.write_manifest(&manifest).map_err(kb_failure)?;
        }
        println!("distilled 0 CWE clusters ({skipped} up to date, 0 failed)");
        return Ok(());
    }

    // Earlier responses answer repeated prompts; the transcript is rewritten
    // with every call of this run.
    let transcript_path = layout.transcript("distill");
    let previous = if transcript_path.exists() {
        Transcript::load(&transcript_path).map_err(data)?
    } else {
        Vec::new()
    };
    remove_if_present(&transcript_path)?;
    let transcript = Arc::new(Transcript::to_file(&transcript_path).map_err(data)?);
    let model = config.client(&config.summarizer).map_err(client)?;
    let summarizer = Recording::new(Replay::new(previous).with_fallback(model), transcript);

    let options = config.distill_options();
    let results = bounded(config.concurrency, || {
        build_entries(&todo, &summarizer, &options)
    });
    let mut failures = Vec::new();
    let mut written = 0;
    for (cwe, result) in results {
        match result {
            Ok(entry) => {
                layout.write_entry(&entry).map_err(kb_failure)?;
                written += 1;
            }
            Err(e) => {
                eprintln!("{cwe}: {e}");
                failures.push(cwe);
            }
        }
    }
    manifest.batch_size = Some(config.batch_size);
    if written > 0 {
        invalidate_index(&mut manifest);
    }
    layout.write_manifest(&manifest).map_err(kb_failure)?;
    println!(
        "distilled {written} CWE clusters ({skipped} up to date, {} failed)",
        failures.len()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(client(anyhow!(
            "{} clusters could not be distilled; rerun to retry them",
            failures.len()
        )))
    }
}

pub fn index(config: &RunConfig) -> Outcome {
    let layout = KbLayout::new(&config.kb_dir);
    let provider = CachedEmbedder::open(
        config.embedder().map_err(client)?,
        &layout.embedding_cache(),
    );
    let kb = KnowledgeBase::<f64>::build_from_dir(&layout, &provider).map_err(kb_failure)?;
    if let Err(e) = provider.save() {
        log::warn!("could not save the embedding cache: {e}");
    }
    println!(
        "indexed {} CWE entries and {} examples with {}",
        kb.entries.len(),
        kb.examples.len(),
        provider.identity()
    );
    Ok(())
}

/// Where a `query` task comes from.
#[derive(Debug, Clone, Args)]
pub struct TaskInput {
    /// JSONL task file; the first task is used unless `--id` is given.
    #[arg(long, conflicts_with_all = ["code", "code_file"])]
    pub tasks: Option<PathBuf>,
    #[arg(long, requires = "tasks")]
    pub id: Option<String>,
    /// Task code given inline.
    #[arg(long, conflicts_with = "code_file")]
    pub code: Option<String>,
    #[arg(long)]
    pub code_file: Option<PathBuf>,
    /// Language of `--code` or `--code-file`.
    #[arg(long, default_value = "python")]
    pub language: String,
}

impl TaskInput {
    fn resolve(&self) -> Result<Task, Failure> {
        if let Some(path) = &self.tasks {
            let tasks = load_tasks(path).map_err(data)?;
            let found = match &self.id {
                Some(id) => tasks.into_iter().find(|t| &t.id == id),
                None => tasks.into_iter().next(),
            };
            return found.ok_or_else(|| data(anyhow!("no matching task in {}", path.display())));
        }
        let language: Language = self.language.parse().map_err(usage)?;
        let prompt = match (&self.code, &self.code_file) {
            (Some(code), _) => code.clone(),
            (None, Some(path)) => fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(data)?,
            (None, None) => return Err(usage(anyhow!("give --tasks, --code or --code-file"))),
        };
        Ok(Task {
            id: "query".into(),
            language,
            prompt,
        })
    }
}

struct StageClients {
    draft: Box<dyn CompletionClient>,
    cause: Box<dyn CompletionClient>,
    generate: Box<dyn CompletionClient>,
    embedder: Box<dyn EmbeddingProvider>,
}

impl StageClients {
    fn new(config: &RunConfig) -> Result<Self, Failure> {
        let make = |c| config.client(c).map_err(|e: ClientError| client(e));
        Ok(StageClients {
            draft: make(&config.draft)?,
            cause: make(&config.cause)?,
            generate: make(&config.generator)?,
            embedder: config.embedder().map_err(client)?,
        })
    }

    fn borrow(&self) -> Clients<'_> {
        Clients {
            draft: self.draft.as_ref(),
            cause: self.cause.as_ref(),
            generate: self.generate.as_ref(),
            embedder: self.embedder.as_ref(),
        }
    }
}

pub fn query(config: &RunConfig, input: &TaskInput, json: bool) -> Outcome {
    let task = input.resolve()?;
    let layout = KbLayout::new(&config.kb_dir);
    let stage = StageClients::new(config)?;
    let kb = KnowledgeBase::<f64>::load(&layout, &stage.embedder.identity()).map_err(kb_failure)?;
    if kb.is_empty() {
        if json {
            print_json(
                &serde_json::json!({ "task_id": task.id, "cwe_candidates": [], "examples": [] }),
            );
        } else {
            println!("no candidates");
        }
        return Err(data(anyhow!(
            "the knowledge base at {} has no CWE entries",
            layout.root.display()
        )));
    }
    let prepared = prepare_task(&task, Some(&kb), &stage.borrow(), &config.pipeline());
    if json {
        print_json(&prepared);
        return Ok(());
    }
    println!("facets: {:?}", prepared.facets);
    println!("draft apis: {}", prepared.analysis.draft_apis.join(", "));
    for c in &prepared.cwe_candidates {
        let detail: Vec<String> = c
            .facets
            .values()
            .map(|f| format!("{}={:.4}@{}", f.facet, f.raw_score, f.rank))
            .collect();
        println!(
            "{:<10} {:.6}  {}",
            c.candidate_id,
            c.fused_score,
            detail.join(" ")
        );
    }
    match &prepared.context {
        Some(ctx) => println!("example: {} ({})", ctx.example_id, ctx.cwe_id),
        None => println!("no security context; generation would be zero-shot"),
    }
    Ok(())
}

pub fn generate(config: &RunConfig, tasks: &Path, run_id: &str, zero_shot: bool) -> Outcome {
    let tasks = load_tasks(tasks).map_err(data)?;
    let layout = KbLayout::new(&config.kb_dir);
    let stage = StageClients::new(config)?;
    let kb = if zero_shot {
        None
    } else {
        Some(KnowledgeBase::<f64>::load(&layout, &stage.embedder.identity()).map_err(kb_failure)?)
    };
    let pipeline = config.pipeline();
    let clients = stage.borrow();
    let results = bounded(config.concurrency, || {
        run_tasks(&tasks, kb.as_ref(), &clients, &pipeline)
    });

    let mut records = Vec::new();
    let mut failed = 0;
    for result in results {
        match result {
            Ok(r) => records.extend(r),
            Err(e) => {
                eprintln!("{e}");
                failed += 1;
            }
        }
    }
    let dir = layout.run_dir(run_id);
    write_file(&dir.join("records.jsonl"), &records_to_jsonl(&records))?;
    write_file(
        &dir.join("config.json"),
        &(serde_json::to_string_pretty(config).expect("config serializes") + "\n"),
    )?;
    let with_context = records.iter().filter(|r| r.context.is_some()).count();
    println!(
        "wrote {} records ({with_context} with security context) to {}",
        records.len(),
        dir.join("records.jsonl").display()
    );
    if failed > 0 {
        return Err(client(anyhow!("generation failed for {failed} tasks")));
    }
    Ok(())
}

pub fn evaluate(verdicts: &Path, ks: &[usize], json: bool) -> Outcome {
    let verdicts = load_verdicts(verdicts).map_err(data)?;
    let report = aggregate::<f64>(&verdicts, ks).map_err(|e| match e {
        MetricError::Verdicts { .. } => data(e),
        _ => usage(e),
    })?;
    for e in &report.excluded {
        log::warn!("task {} excluded: {}", e.task_id, e.reason);
    }
    if json {
        print_json(&report);
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct KbStats {
    root: PathBuf,
    manifest: Manifest,
    slices: usize,
    mean_kept_ratio: Option<f64>,
    unmatched_lines: usize,
    cluster_sizes: BTreeMap<String, usize>,
    index_built: bool,
}

pub fn inspect(config: &RunConfig, json: bool) -> Outcome {
    let layout = KbLayout::new(&config.kb_dir);
    let manifest = layout.read_manifest().map_err(kb_failure)?;
    let slices = if layout.slices_dir().exists() {
        layout.read_slices().map_err(kb_failure)?
    } else {
        BTreeMap::new()
    };
    let entries = if layout.cwe_root().exists() {
        layout.read_entries().map_err(kb_failure)?
    } else {
        BTreeMap::new()
    };
    let stats = KbStats {
        root: layout.root.clone(),
        slices: slices.len(),
        mean_kept_ratio: (!slices.is_empty())
            .then(|| slices.values().map(|p| p.kept_ratio()).sum::<f64>() / slices.len() as f64),
        unmatched_lines: slices.values().map(|p| p.unmatched_lines).sum(),
        cluster_sizes: entries
            .values()
            .map(|e| (e.cwe_id.to_string(), e.member_ids.len()))
            .collect(),
        index_built: manifest.embedding_provider.is_some() && layout.api_index().exists(),
        manifest,
    };
    if json {
        print_json(&stats);
        return Ok(());
    }
    let m = &stats.manifest;
    println!("knowledge base   {}", stats.root.display());
    println!(
        "corpus           {} instances, sha256 {}",
        m.instance_count, m.corpus_hash
    );
    println!(
        "hop limit        {}",
        m.hop_limit.map_or("-".into(), |h| h.to_string())
    );
    println!(
        "batch size       {}",
        m.batch_size.map_or("-".into(), |b| b.to_string())
    );
    match stats.mean_kept_ratio {
        Some(r) => println!(
            "slices           {} (mean kept ratio {r:.3}, {} unmatched lines)",
            stats.slices, stats.unmatched_lines
        ),
        None => println!("slices           none"),
    }
    println!("CWE entries      {}", stats.cluster_sizes.len());
    for (cwe, size) in &stats.cluster_sizes {
        println!("  {cwe:<12} {size} pairs");
    }
    match (&m.embedding_provider, stats.index_built) {
        (Some(p), true) => println!("index            built with {p}"),
        _ => println!("index            not built"),
    }
    Ok(())
}
