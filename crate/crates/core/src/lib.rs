//! Security knowledge base construction and hierarchical multi-faceted
//! retrieval for steering code-generation models toward secure output.
//!
//! The offline side ingests vulnerability-fix pairs ([`corpus`]), builds
//! statement-level program dependence graphs ([`graph`]), slices them around
//! the patched statements ([`slicer`]) and distills per-CWE guidelines and
//! vulnerability causes with an LLM ([`distill`]). The online side analyses a
//! coding task, retrieves a CWE shortlist and one secure example with
//! thresholded reciprocal rank fusion ([`index`]), and assembles the augmented
//! prompt ([`pipeline`]). [`metrics`] computes Pass@k, SecurePass@k and
//! SecureRate from externally supplied verdicts.
//!
//! Scoring code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod config;
pub mod corpus;
pub mod distill;
pub mod graph;
pub mod index;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod slicer;

pub use corpus::{CweId, Language, PatchLineSets, VulnFixInstance};
pub use graph::{DependenceEdge, EdgeKind, NodeKind, ProgramDependenceGraph, StatementNode};
pub use scalar::Scalar;
pub use slicer::SlicedPair;

/// BM25 index over API-term documents with `f64` scores.
pub type SparseIndex = index::bm25::SparseIndex<f64>;
/// One facet's score and rank for a candidate.
pub type FacetScore = index::fusion::FacetScore<f64>;
/// A fused retrieval candidate.
pub type FusedCandidate = index::fusion::FusedCandidate<f64>;
/// Thresholds, smoothing constant and rank cap for the fusion.
pub type FusionParams = index::fusion::FusionParams<f64>;
/// Per-task and aggregate evaluation metrics.
pub type MetricReport = metrics::MetricReport<f64>;
