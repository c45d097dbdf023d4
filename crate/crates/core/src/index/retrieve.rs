//! Two-level retrieval: a CWE shortlist, then one secure example.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bm25::api_terms;
use super::embed::cosine;
use super::fusion::{rank_facet, rrf_fuse, Facet, FacetScore, FusedCandidate, FusionParams};
use super::kb::KnowledgeBase;
use crate::corpus::{CweId, Language};
use crate::scalar::Scalar;

/// Query-side signals. A `None` or empty field switches its facet off.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub draft_apis: Vec<String>,
    pub cause_vector: Option<Vec<f32>>,
    pub code_vector: Option<Vec<f32>>,
    /// Restricts example retrieval to one language.
    #[serde(default)]
    pub language: Option<Language>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrieveError {
    #[error("the knowledge base has no CWE entries")]
    EmptyIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
pub struct ExampleHit<T> {
    pub example_id: String,
    pub cwe_id: CweId,
    pub candidate: FusedCandidate<T>,
}

impl<T: Scalar + Serialize + DeserializeOwned> KnowledgeBase<T> {
    fn api_facet(
        &self,
        index: &super::bm25::SparseIndex<T>,
        query: &RetrievalQuery,
    ) -> Option<Vec<FacetScore<T>>> {
        if query.draft_apis.is_empty() {
            return None;
        }
        let terms = api_terms(&query.draft_apis, self.manifest.split_dotted_apis);
        Some(rank_facet(Facet::Api, index.score(&terms)))
    }

    /// CWE-level facet lists (api, cause) for a query, before fusion.
    pub fn cwe_facets(&self, query: &RetrievalQuery) -> Vec<Vec<FacetScore<T>>> {
        let mut lists = Vec::new();
        if let Some(api) = self.api_facet(&self.cwe_api_index, query) {
            lists.push(api);
        }
        if let Some(cause) = &query.cause_vector {
            let scores = self
                .cause_vectors
                .iter()
                .map(|(id, v)| (id.to_string(), cosine::<T>(cause, v)))
                .collect();
            lists.push(rank_facet(Facet::Cause, scores));
        }
        lists
    }

    /// Top `k` fused CWE candidates.
    pub fn retrieve_cwe(
        &self,
        query: &RetrievalQuery,
        k: usize,
        params: &FusionParams<T>,
    ) -> Result<Vec<FusedCandidate<T>>, RetrieveError> {
        if self.is_empty() {
            return Err(RetrieveError::EmptyIndex);
        }
        let mut fused = rrf_fuse(&self.cwe_facets(query), params);
        fused.truncate(k);
        Ok(fused)
    }

    /// Code-level facet lists (api, cause, code) over the examples of `shortlist`.
    pub fn example_facets(
        &self,
        query: &RetrievalQuery,
        shortlist: &[CweId],
    ) -> Vec<Vec<FacetScore<T>>> {
        let in_scope = |id: &str| {
            self.examples.get(id).is_some_and(|e| {
                shortlist.contains(&e.cwe_id) && query.language.is_none_or(|l| l == e.language)
            })
        };
        let mut lists = Vec::new();
        if let Some(api) = self.api_facet(&self.example_api_index, query) {
            let kept: Vec<(String, T)> = api
                .into_iter()
                .filter(|s| in_scope(&s.candidate_id))
                .map(|s| (s.candidate_id, s.raw_score))
                .collect();
            lists.push(rank_facet(Facet::Api, kept));
        }
        if let Some(cause) = &query.cause_vector {
            let scores = self
                .examples
                .values()
                .filter(|e| shortlist.contains(&e.cwe_id))
                .filter_map(|e| {
                    let parent = self.cause_vectors.get(&e.cwe_id.to_string())?;
                    Some((e.id.clone(), cosine::<T>(cause, parent)))
                })
                .collect();
            lists.push(rank_facet(Facet::Cause, scores));
        }
        if let Some(code) = &query.code_vector {
            let scores = self
                .code_vectors
                .iter()
                .filter(|(id, _)| in_scope(id))
                .map(|(id, v)| (id.to_string(), cosine::<T>(code, v)))
                .collect();
            lists.push(rank_facet(Facet::Code, scores));
        }
        lists
    }

    /// Up to `m` fused examples from the shortlisted CWEs, best first.
    pub fn retrieve_examples(
        &self,
        query: &RetrievalQuery,
        shortlist: &[CweId],
        m: usize,
        params: &FusionParams<T>,
    ) -> Vec<ExampleHit<T>> {
        if shortlist.is_empty() {
            return Vec::new();
        }
        rrf_fuse(&self.example_facets(query, shortlist), params)
            .into_iter()
            .take(m)
            .map(|c| ExampleHit {
                example_id: c.candidate_id.clone(),
                cwe_id: self.examples[&c.candidate_id].cwe_id,
                candidate: c,
            })
            .collect()
    }

    /// Best fused example from the shortlisted CWEs.
    pub fn retrieve_example(
        &self,
        query: &RetrievalQuery,
        shortlist: &[CweId],
        params: &FusionParams<T>,
    ) -> Option<ExampleHit<T>> {
        self.retrieve_examples(query, shortlist, 1, params)
            .into_iter()
            .next()
    }
}
