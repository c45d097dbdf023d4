//! On-disk knowledge base layout and the in-memory retrieval indexes.
//!
//! ```text
//! <kb>/manifest.json
//! <kb>/corpus.jsonl
//! <kb>/slices/<instance-id>.json
//! <kb>/cwe/<CWE-ID>/{guideline.md,cause.md,apis.json}
//! <kb>/transcripts/<run-id>.jsonl
//! <kb>/vectors/{cause,code}.bin (+ .json sidecars)
//! <kb>/sparse/api_index.json, <kb>/sparse/example_api_index.json
//! <kb>/runs/<run-id>/records.jsonl
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bm25::{api_term_counts, SparseIndex, DEFAULT_B, DEFAULT_K1};
use super::embed::{EmbedError, EmbeddingProvider};
use super::vectors::VectorTable;
use crate::corpus::{load_corpus, CorpusError, CweId, Language, VulnFixInstance};
use crate::distill::CweEntry;
use crate::graph::extract_api_calls;
use crate::scalar::Scalar;
use crate::slicer::SlicedPair;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{artifact} is missing from {kb}; run `{stage}` first")]
    Missing {
        artifact: String,
        stage: &'static str,
        kb: PathBuf,
    },
    #[error("index was built with embedding provider {built}, but {requested} was requested")]
    ProviderMismatch { built: String, requested: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> KbError + '_ {
    move |source| KbError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub corpus_hash: String,
    pub instance_count: usize,
    #[serde(default)]
    pub hop_limit: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub embedding_provider: Option<String>,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub split_dotted_apis: bool,
}

impl Manifest {
    pub fn new(corpus_hash: String, instance_count: usize) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            corpus_hash,
            instance_count,
            hop_limit: None,
            batch_size: None,
            embedding_provider: None,
            embedding_dim: None,
            bm25_k1: DEFAULT_K1,
            bm25_b: DEFAULT_B,
            split_dotted_apis: true,
        }
    }
}

/// Paths inside a knowledge-base directory.
#[derive(Debug, Clone)]
pub struct KbLayout {
    pub root: PathBuf,
}

/// File-name-safe form of an instance id.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), KbError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V, KbError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| KbError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), KbError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Serialized form of `cwe/<id>/apis.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ApiFile {
    cwe_id: CweId,
    member_ids: Vec<String>,
    api_vocabulary: BTreeMap<String, usize>,
}

impl KbLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        KbLayout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    pub fn slices_dir(&self) -> PathBuf {
        self.root.join("slices")
    }

    pub fn slice(&self, instance_id: &str) -> PathBuf {
        self.slices_dir()
            .join(format!("{}.json", sanitize_id(instance_id)))
    }

    pub fn cwe_root(&self) -> PathBuf {
        self.root.join("cwe")
    }

    pub fn cwe_dir(&self, cwe: CweId) -> PathBuf {
        self.cwe_root().join(cwe.to_string())
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.root.join("transcripts")
    }

    pub fn transcript(&self, run_id: &str) -> PathBuf {
        self.transcripts_dir()
            .join(format!("{}.jsonl", sanitize_id(run_id)))
    }

    pub fn cause_vectors(&self) -> PathBuf {
        self.root.join("vectors").join("cause.bin")
    }

    pub fn code_vectors(&self) -> PathBuf {
        self.root.join("vectors").join("code.bin")
    }

    pub fn api_index(&self) -> PathBuf {
        self.root.join("sparse").join("api_index.json")
    }

    pub fn example_api_index(&self) -> PathBuf {
        self.root.join("sparse").join("example_api_index.json")
    }

    pub fn embedding_cache(&self) -> PathBuf {
        self.root.join("cache").join("embeddings.json")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(sanitize_id(run_id))
    }

    fn missing(&self, artifact: &Path, stage: &'static str) -> KbError {
        KbError::Missing {
            artifact: artifact
                .strip_prefix(&self.root)
                .unwrap_or(artifact)
                .display()
                .to_string(),
            stage,
            kb: self.root.clone(),
        }
    }

    fn require(&self, path: &Path, stage: &'static str) -> Result<(), KbError> {
        if path.exists() {
            Ok(())
        } else {
            Err(self.missing(path, stage))
        }
    }

    pub fn read_manifest(&self) -> Result<Manifest, KbError> {
        let path = self.manifest();
        self.require(&path, "ingest")?;
        read_json(&path)
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), KbError> {
        write_json(&self.manifest(), manifest)
    }

    pub fn read_corpus(&self) -> Result<Vec<VulnFixInstance>, KbError> {
        let path = self.corpus();
        self.require(&path, "ingest")?;
        Ok(load_corpus(&path)?.instances)
    }

    pub fn write_slice(&self, pair: &SlicedPair) -> Result<(), KbError> {
        write_json(&self.slice(&pair.instance_id), pair)
    }

    /// All stored slices keyed by instance id.
    pub fn read_slices(&self) -> Result<BTreeMap<String, SlicedPair>, KbError> {
        let dir = self.slices_dir();
        self.require(&dir, "slice")?;
        let mut out = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let pair: SlicedPair = read_json(&path)?;
                out.insert(pair.instance_id.clone(), pair);
            }
        }
        Ok(out)
    }

    /// Empties the slice directory so a new run does not mix hop limits.
    pub fn clear_slices(&self) -> Result<(), KbError> {
        let dir = self.slices_dir();
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))
    }

    pub fn write_entry(&self, entry: &CweEntry) -> Result<(), KbError> {
        let dir = self.cwe_dir(entry.cwe_id);
        write_text(
            &dir.join("guideline.md"),
            &format!("{}\n", entry.guideline.trim_end()),
        )?;
        write_text(
            &dir.join("cause.md"),
            &format!("{}\n", entry.cause_summary.trim_end()),
        )?;
        write_json(
            &dir.join("apis.json"),
            &ApiFile {
                cwe_id: entry.cwe_id,
                member_ids: entry.member_ids.clone(),
                api_vocabulary: entry.api_vocabulary.clone(),
            },
        )
    }

    /// Reads one entry; `None` when its directory is incomplete.
    pub fn read_entry(&self, cwe: CweId) -> Result<Option<CweEntry>, KbError> {
        let dir = self.cwe_dir(cwe);
        let (g, c, a) = (
            dir.join("guideline.md"),
            dir.join("cause.md"),
            dir.join("apis.json"),
        );
        if !(g.exists() && c.exists() && a.exists()) {
            return Ok(None);
        }
        let apis: ApiFile = read_json(&a)?;
        Ok(Some(CweEntry {
            cwe_id: apis.cwe_id,
            guideline: fs::read_to_string(&g)
                .map_err(io_err(&g))?
                .trim_end()
                .to_string(),
            cause_summary: fs::read_to_string(&c)
                .map_err(io_err(&c))?
                .trim_end()
                .to_string(),
            api_vocabulary: apis.api_vocabulary,
            member_ids: apis.member_ids,
        }))
    }

    pub fn read_entries(&self) -> Result<BTreeMap<CweId, CweEntry>, KbError> {
        let root = self.cwe_root();
        self.require(&root, "distill")?;
        let mut out = BTreeMap::new();
        for entry in fs::read_dir(&root).map_err(io_err(&root))? {
            let name = entry.map_err(io_err(&root))?.file_name();
            let Ok(cwe) = name.to_string_lossy().parse::<CweId>() else {
                continue;
            };
            if let Some(e) = self.read_entry(cwe)? {
                out.insert(cwe, e);
            }
        }
        Ok(out)
    }
}

/// A sliced secure example available to the code-level index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub cwe_id: CweId,
    pub language: Language,
    pub secure_slice: String,
    /// Call names in both sliced variants, one count per variant.
    pub api_vocabulary: BTreeMap<String, usize>,
}

impl Example {
    pub fn from_pair(instance: &VulnFixInstance, pair: &SlicedPair) -> Self {
        let mut vocab = BTreeMap::new();
        for code in [&pair.vulnerable_slice, &pair.secure_slice] {
            for call in extract_api_calls(code, instance.language).unwrap_or_default() {
                *vocab.entry(call).or_insert(0) += 1;
            }
        }
        Example {
            id: instance.id.clone(),
            cwe_id: instance.cwe_id,
            language: instance.language,
            secure_slice: pair.secure_slice.clone(),
            api_vocabulary: vocab,
        }
    }
}

/// Examples for every non-empty slice whose instance belongs to a distilled CWE.
pub fn collect_examples(
    corpus: &[VulnFixInstance],
    slices: &BTreeMap<String, SlicedPair>,
    entries: &BTreeMap<CweId, CweEntry>,
) -> Vec<Example> {
    corpus
        .iter()
        .filter(|i| entries.contains_key(&i.cwe_id))
        .filter_map(|i| slices.get(&i.id).map(|p| (i, p)))
        .filter(|(_, p)| !p.is_empty() && !p.secure_slice.trim().is_empty())
        .map(|(i, p)| Example::from_pair(i, p))
        .collect()
}

/// Queryable two-level index.
#[derive(Debug, Clone)]
pub struct KnowledgeBase<T = f64> {
    pub manifest: Manifest,
    pub entries: BTreeMap<CweId, CweEntry>,
    pub examples: BTreeMap<String, Example>,
    pub cause_vectors: VectorTable,
    pub code_vectors: VectorTable,
    pub cwe_api_index: SparseIndex<T>,
    pub example_api_index: SparseIndex<T>,
}

impl<T: Scalar + Serialize + DeserializeOwned> KnowledgeBase<T> {
    /// Embeds cause summaries and secure slices and builds both sparse indexes.
    pub fn build(
        mut manifest: Manifest,
        entries: BTreeMap<CweId, CweEntry>,
        examples: Vec<Example>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, KbError> {
        let identity = provider.identity();
        let dim = provider.dim();
        manifest.embedding_provider = Some(identity.clone());
        manifest.embedding_dim = Some(dim);
        let split = manifest.split_dotted_apis;
        let (k1, b) = (T::of(manifest.bm25_k1), T::of(manifest.bm25_b));

        let causes: Vec<String> = entries.values().map(|e| e.cause_summary.clone()).collect();
        let mut cause_vectors = VectorTable::new(identity.clone(), dim);
        for (entry, v) in entries.values().zip(provider.embed(&causes)?) {
            cause_vectors.push(entry.cwe_id.to_string(), &v);
        }
        let codes: Vec<String> = examples.iter().map(|e| e.secure_slice.clone()).collect();
        let mut code_vectors = VectorTable::new(identity, dim);
        for (ex, v) in examples.iter().zip(provider.embed(&codes)?) {
            code_vectors.push(ex.id.clone(), &v);
        }

        let mut cwe_api_index = SparseIndex::new(k1, b);
        for e in entries.values() {
            cwe_api_index.insert(
                e.cwe_id.to_string(),
                api_term_counts(&e.api_vocabulary, split),
            );
        }
        let mut example_api_index = SparseIndex::new(k1, b);
        for ex in &examples {
            example_api_index.insert(ex.id.clone(), api_term_counts(&ex.api_vocabulary, split));
        }
        Ok(KnowledgeBase {
            manifest,
            entries,
            examples: examples.into_iter().map(|e| (e.id.clone(), e)).collect(),
            cause_vectors,
            code_vectors,
            cwe_api_index,
            example_api_index,
        })
    }

    /// Builds the index from the artifacts of earlier stages and writes it.
    pub fn build_from_dir(
        layout: &KbLayout,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, KbError> {
        let manifest = layout.read_manifest()?;
        let corpus = layout.read_corpus()?;
        let slices = layout.read_slices()?;
        let entries = layout.read_entries()?;
        let examples = collect_examples(&corpus, &slices, &entries);
        let kb = Self::build(manifest, entries, examples, provider)?;
        kb.save(layout)?;
        Ok(kb)
    }

    /// Writes vectors, sparse indexes and the updated manifest.
    pub fn save(&self, layout: &KbLayout) -> Result<(), KbError> {
        for (table, path) in [
            (&self.cause_vectors, layout.cause_vectors()),
            (&self.code_vectors, layout.code_vectors()),
        ] {
            table.write(&path).map_err(io_err(&path))?;
        }
        write_json(&layout.api_index(), &self.cwe_api_index)?;
        write_json(&layout.example_api_index(), &self.example_api_index)?;
        layout.write_manifest(&self.manifest)
    }

    /// Loads a built index, refusing one built with another provider.
    pub fn load(layout: &KbLayout, provider_identity: &str) -> Result<Self, KbError> {
        let manifest = layout.read_manifest()?;
        let built = manifest
            .embedding_provider
            .clone()
            .ok_or_else(|| layout.missing(&layout.cause_vectors(), "index"))?;
        if built != provider_identity {
            return Err(KbError::ProviderMismatch {
                built,
                requested: provider_identity.to_string(),
            });
        }
        for path in [
            layout.cause_vectors(),
            layout.code_vectors(),
            layout.api_index(),
            layout.example_api_index(),
        ] {
            layout.require(&path, "index")?;
        }
        let read_table = |path: PathBuf| VectorTable::read(&path).map_err(io_err(&path));
        let cause_vectors = read_table(layout.cause_vectors())?;
        let code_vectors = read_table(layout.code_vectors())?;
        for table in [&cause_vectors, &code_vectors] {
            if table.provider != built {
                return Err(KbError::ProviderMismatch {
                    built: table.provider.clone(),
                    requested: provider_identity.to_string(),
                });
            }
        }
        let entries = layout.read_entries()?;
        let corpus = layout.read_corpus()?;
        let slices = layout.read_slices()?;
        let examples = collect_examples(&corpus, &slices, &entries)
            .into_iter()
            .map(|e| (e.id.clone(), e))
            .collect();
        Ok(KnowledgeBase {
            manifest,
            entries,
            examples,
            cause_vectors,
            code_vectors,
            cwe_api_index: read_json(&layout.api_index())?,
            example_api_index: read_json(&layout.example_api_index())?,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::embed::HashEmbedder;

    fn entry(cwe: u32, cause: &str, apis: &[(&str, usize)]) -> CweEntry {
        CweEntry {
            cwe_id: CweId::new(cwe),
            guideline: format!("- rule {cwe}"),
            cause_summary: cause.into(),
            api_vocabulary: apis.iter().map(|(a, c)| (a.to_string(), *c)).collect(),
            member_ids: vec![format!("i{cwe}")],
        }
    }

    #[test]
    fn entries_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let layout = KbLayout::new(dir.path());
        let e = entry(502, "unsafe yaml", &[("yaml.load", 2)]);
        layout.write_entry(&e).unwrap();
        assert_eq!(layout.read_entry(CweId::new(502)).unwrap(), Some(e.clone()));
        assert_eq!(layout.read_entries().unwrap().len(), 1);
        assert!(layout.read_entry(CweId::new(79)).unwrap().is_none());
    }

    #[test]
    fn missing_stage_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let layout = KbLayout::new(dir.path());
        let err = layout.read_slices().unwrap_err();
        assert!(err.to_string().contains("run `slice` first"), "{err}");
    }

    #[test]
    fn provider_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let layout = KbLayout::new(dir.path());
        let entries: BTreeMap<_, _> =
            [(CweId::new(89), entry(89, "sql", &[("cursor.execute", 1)]))].into();
        layout.write_entry(&entries[&CweId::new(89)]).unwrap();
        fs::create_dir_all(layout.slices_dir()).unwrap();
        fs::write(layout.corpus(), "").unwrap();
        let kb: KnowledgeBase<f64> = KnowledgeBase::build(
            Manifest::new("h".into(), 0),
            entries,
            Vec::new(),
            &HashEmbedder::new(16),
        )
        .unwrap();
        kb.save(&layout).unwrap();
        assert!(KnowledgeBase::<f64>::load(&layout, "hash-bow-16").is_ok());
        assert!(matches!(
            KnowledgeBase::<f64>::load(&layout, "hash-bow-32"),
            Err(KbError::ProviderMismatch { .. })
        ));
    }

    #[test]
    fn sanitized_ids() {
        assert_eq!(sanitize_id("a/b c:1.py"), "a_b_c_1.py");
    }
}
