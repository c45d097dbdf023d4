//! Dense text embeddings.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{ClientError, HttpClient, HttpSettings};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding provider failed: {0}")]
    Provider(#[from] ClientError),
    #[error("provider returned {got} vectors of dimension {dim}, expected {expected} of dimension {want}")]
    Shape {
        got: usize,
        dim: usize,
        expected: usize,
        want: usize,
    },
    #[error("provider returned a non-finite value")]
    NonFinite,
}

pub trait EmbeddingProvider: Send + Sync {
    /// Provider and model label recorded in index manifests.
    fn identity(&self) -> String;

    fn dim(&self) -> usize;

    /// One L2-normalized vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        (**self).embed(texts)
    }
}

/// Scales `v` to unit length; zero vectors stay zero.
pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; 0 when either vector is zero or the lengths differ.
pub fn cosine<T: Scalar>(a: &[f32], b: &[f32]) -> T {
    if a.len() != b.len() {
        return T::zero();
    }
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (T::of(f64::from(*x)), T::of(f64::from(*y)));
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Signed feature hashing of lower-cased alphanumeric tokens.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let digest = Sha256::digest(token.to_lowercase().as_bytes());
            let mut bucket = [0u8; 8];
            bucket.copy_from_slice(&digest[..8]);
            let index = (u64::from_le_bytes(bucket) % self.dim as u64) as usize;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[index] += sign;
        }
        l2_normalize(&mut v);
        v
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn identity(&self) -> String {
        format!("hash-bow-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    settings: HttpSettings,
    dim: usize,
    agent: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dim: usize) -> Result<Self, EmbedError> {
        let agent = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpEmbedder {
            settings,
            dim,
            agent,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn identity(&self) -> String {
        format!("http:{}:{}", self.settings.model, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.settings.model, "input": texts });
        let reply = HttpClient::post(&self.agent, &self.settings, "embeddings", &body)?;
        let data = reply["data"]
            .as_array()
            .ok_or_else(|| ClientError::Malformed("reply has no data array".into()))?;
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let raw = item["embedding"]
                .as_array()
                .ok_or_else(|| ClientError::Malformed("item has no embedding".into()))?;
            let mut v: Vec<f32> = raw
                .iter()
                .map(|x| x.as_f64().unwrap_or(f64::NAN) as f32)
                .collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
            l2_normalize(&mut v);
            out.push(v);
        }
        check_shape(&out, texts.len(), self.dim)?;
        Ok(out)
    }
}

fn check_shape(vectors: &[Vec<f32>], expected: usize, want: usize) -> Result<(), EmbedError> {
    let bad_dim = vectors.iter().map(Vec::len).find(|d| *d != want);
    if vectors.len() != expected || bad_dim.is_some() {
        return Err(EmbedError::Shape {
            got: vectors.len(),
            dim: bad_dim.unwrap_or(want),
            expected,
            want,
        });
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CacheFile {
    identity: String,
    vectors: BTreeMap<String, Vec<f32>>,
}

/// Reuses vectors keyed by (provider identity, text hash), persisted as JSON.
pub struct CachedEmbedder<P> {
    inner: P,
    path: Option<PathBuf>,
    cache: Mutex<BTreeMap<String, Vec<f32>>>,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn in_memory(inner: P) -> Self {
        CachedEmbedder {
            inner,
            path: None,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    /// Loads the cache at `path` when it exists and belongs to the same provider.
    pub fn open(inner: P, path: &Path) -> Self {
        let vectors = fs::read_to_string(path)
            .ok()
            .and_then(|text| serde_json::from_str::<CacheFile>(&text).ok())
            .filter(|f| f.identity == inner.identity())
            .map(|f| f.vectors)
            .unwrap_or_default();
        CachedEmbedder {
            inner,
            path: Some(path.to_path_buf()),
            cache: Mutex::new(vectors),
        }
    }

    pub fn save(&self) -> io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = CacheFile {
            identity: self.inner.identity(),
            vectors: self.cache.lock().expect("cache lock").clone(),
        };
        fs::write(path, serde_json::to_vec(&file).map_err(io::Error::other)?)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::BTreeSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !cache.contains_key(*k) && seen.insert((*k).clone()))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed(&missing)?;
            check_shape(&fresh, missing.len(), self.inner.dim())?;
            let mut cache = self.cache.lock().expect("cache lock");
            for (text, v) in missing.iter().zip(fresh) {
                cache.insert(text_key(text), v);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn hash_embedding_is_normalized_and_stable() {
        let e = HashEmbedder::new(64);
        let a = e.embed_one("yaml.safe_load(classes)");
        let b = e.embed_one("yaml.safe_load(classes)");
        assert_eq!(a, b);
        let norm: f32 = a.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-5);
        assert!((cosine::<f64>(&a, &b) - 1.0).abs() < 1e-6);
        assert_eq!(e.embed_one("  "), vec![0.0; 64]);
        assert_eq!(cosine::<f64>(&e.embed_one(""), &a), 0.0);
    }

    #[test]
    fn cosine_of_orthogonal_vectors() {
        assert_eq!(cosine::<f64>(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert!((cosine::<f32>(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-6);
    }

    struct Counting(AtomicUsize, HashEmbedder);

    impl EmbeddingProvider for Counting {
        fn identity(&self) -> String {
            self.1.identity()
        }
        fn dim(&self) -> usize {
            self.1.dim()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
            self.0.fetch_add(texts.len(), Ordering::SeqCst);
            self.1.embed(texts)
        }
    }

    #[test]
    fn cache_reuses_vectors_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let texts = vec!["a b".to_string(), "c".to_string(), "a b".to_string()];
        let first =
            CachedEmbedder::open(Counting(AtomicUsize::new(0), HashEmbedder::new(8)), &path);
        let v1 = first.embed(&texts).unwrap();
        assert_eq!(first.inner.0.load(Ordering::SeqCst), 2);
        first.save().unwrap();

        let second =
            CachedEmbedder::open(Counting(AtomicUsize::new(0), HashEmbedder::new(8)), &path);
        assert_eq!(second.embed(&texts).unwrap(), v1);
        assert_eq!(second.inner.0.load(Ordering::SeqCst), 0);

        let other =
            CachedEmbedder::open(Counting(AtomicUsize::new(0), HashEmbedder::new(16)), &path);
        assert_eq!(other.cached(), 0);
    }
}
