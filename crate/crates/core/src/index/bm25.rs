//! Okapi BM25 over term multisets.
//!
//! score(d, q) = Σ_{t ∈ q} idf(t) · f(t,d)·(k1 + 1) / (f(t,d) + k1·(1 − b + b·|d|/avgdl))
//!
//! with idf(t) = ln((N − df(t) + 0.5)/(df(t) + 0.5) + 1). Repeated query
//! terms count once per occurrence.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::scalar::{cmp_desc, Scalar};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct SparseIndex<T> {
    pub k1: T,
    pub b: T,
    documents: BTreeMap<String, BTreeMap<String, usize>>,
    doc_len: BTreeMap<String, usize>,
    df: BTreeMap<String, usize>,
    avg_doc_len: T,
}

impl<T: Scalar> Default for SparseIndex<T> {
    fn default() -> Self {
        Self::new(T::of(DEFAULT_K1), T::of(DEFAULT_B))
    }
}

impl<T: Scalar> SparseIndex<T> {
    pub fn new(k1: T, b: T) -> Self {
        SparseIndex {
            k1,
            b,
            documents: BTreeMap::new(),
            doc_len: BTreeMap::new(),
            df: BTreeMap::new(),
            avg_doc_len: T::zero(),
        }
    }

    /// Builds an index with default parameters from `(doc_id, terms)` pairs.
    pub fn build<I, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = (S, BTreeMap<String, usize>)>,
        S: Into<String>,
    {
        let mut index = Self::default();
        for (id, terms) in docs {
            let terms = terms.into_iter().filter(|(_, c)| *c > 0).collect();
            index.documents.insert(id.into(), terms);
        }
        index.refresh();
        index
    }

    /// Adds or replaces a document and refreshes the statistics.
    pub fn insert(&mut self, id: impl Into<String>, terms: BTreeMap<String, usize>) {
        let terms: BTreeMap<String, usize> = terms.into_iter().filter(|(_, c)| *c > 0).collect();
        self.documents.insert(id.into(), terms);
        self.refresh();
    }

    fn refresh(&mut self) {
        self.df.clear();
        self.doc_len.clear();
        let mut total = 0usize;
        for (id, terms) in &self.documents {
            let len: usize = terms.values().sum();
            total += len;
            self.doc_len.insert(id.clone(), len);
            for t in terms.keys() {
                *self.df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        self.avg_doc_len = if self.documents.is_empty() {
            T::zero()
        } else {
            T::of_usize(total) / T::of_usize(self.documents.len())
        };
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn avg_doc_len(&self) -> T {
        self.avg_doc_len
    }

    pub fn idf(&self, term: &str) -> T {
        let n = T::of_usize(self.documents.len());
        let df = T::of_usize(self.document_frequency(term));
        let half = T::of(0.5);
        ((n - df + half) / (df + half) + T::one()).ln()
    }

    /// Documents with a positive score, best first, ties by id.
    pub fn score<S: AsRef<str>>(&self, query: &[S]) -> Vec<(String, T)> {
        if query.is_empty() || self.documents.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for (id, terms) in &self.documents {
            let len = T::of_usize(self.doc_len[id]);
            let norm = T::one() - self.b + self.b * len / self.avg_doc_len;
            let mut score = T::zero();
            for q in query {
                let Some(&tf) = terms.get(q.as_ref()) else {
                    continue;
                };
                let tf = T::of_usize(tf);
                score = score
                    + self.idf(q.as_ref()) * tf * (self.k1 + T::one()) / (tf + self.k1 * norm);
            }
            if score > T::zero() {
                out.push((id.clone(), score));
            }
        }
        out.sort_by(|a, b| cmp_desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Expands call names into index terms. With `split_dotted`, a dotted name
/// also contributes each of its parts: `yaml.safe_load` gives `yaml.safe_load`,
/// `yaml` and `safe_load`.
pub fn api_terms<S: AsRef<str>>(calls: &[S], split_dotted: bool) -> Vec<String> {
    let mut out = Vec::new();
    for call in calls {
        let call = call.as_ref();
        out.push(call.to_string());
        if split_dotted && call.contains('.') {
            out.extend(
                call.split('.')
                    .filter(|p| !p.is_empty())
                    .map(str::to_string),
            );
        }
    }
    out
}

/// Term multiset of a call-count map.
pub fn api_term_counts(
    vocab: &BTreeMap<String, usize>,
    split_dotted: bool,
) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for (call, count) in vocab {
        for term in api_terms(&[call], split_dotted) {
            *out.entry(term).or_insert(0) += count;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(terms: &[&str]) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for t in terms {
            *m.entry(t.to_string()).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn absent_terms_and_empty_queries() {
        let idx: SparseIndex<f64> = SparseIndex::build([("a", doc(&["x"]))]);
        assert!(idx.score(&["y"]).is_empty());
        assert!(idx.score::<&str>(&[]).is_empty());
        assert!(SparseIndex::<f64>::default().score(&["x"]).is_empty());
    }

    #[test]
    fn single_document_closed_form() {
        let idx: SparseIndex<f64> = SparseIndex::build([("a", doc(&["x"]))]);
        // N = 1, df = 1, tf = 1, |d| = avgdl: idf = ln(0.5/1.5 + 1) = ln(4/3),
        // tf part = 1·2.2 / (1 + 1.2) = 1.
        let got = idx.score(&["x"]);
        assert_eq!(got.len(), 1);
        assert!((got[0].1 - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn ties_break_by_id() {
        let idx: SparseIndex<f64> = SparseIndex::build([("b", doc(&["x"])), ("a", doc(&["x"]))]);
        let ids: Vec<_> = idx.score(&["x"]).into_iter().map(|(id, _)| id).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn generic_over_f32() {
        let idx: SparseIndex<f32> =
            SparseIndex::build([("a", doc(&["x", "y"])), ("b", doc(&["y"]))]);
        let got = idx.score(&["x"]);
        assert_eq!(got[0].0, "a");
    }

    #[test]
    fn dotted_terms() {
        assert_eq!(
            api_terms(&["yaml.safe_load"], true),
            vec!["yaml.safe_load", "yaml", "safe_load"]
        );
        assert_eq!(
            api_terms(&["yaml.safe_load"], false),
            vec!["yaml.safe_load"]
        );
        let vocab: BTreeMap<String, usize> =
            [("os.system".to_string(), 2), ("os.path".to_string(), 1)].into();
        let counts = api_term_counts(&vocab, true);
        assert_eq!(counts["os"], 3);
        assert_eq!(counts["system"], 2);
    }

    #[test]
    fn round_trips_through_json() {
        let idx: SparseIndex<f64> =
            SparseIndex::build([("a", doc(&["x", "x", "y"])), ("b", doc(&["y"]))]);
        let json = serde_json::to_string(&idx).unwrap();
        let back: SparseIndex<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.score(&["x", "y"]), idx.score(&["x", "y"]));
    }
}
