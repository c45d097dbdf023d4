//! Retrieval indexes: BM25 over API terms, dense cause and code vectors, and
//! the thresholded rank fusion that combines them.

pub mod bm25;
pub mod embed;
pub mod fusion;
pub mod kb;
pub mod retrieve;
pub mod vectors;

pub use embed::{CachedEmbedder, EmbedError, EmbeddingProvider, HashEmbedder, HttpEmbedder};
pub use fusion::{rank_facet, rrf_fuse, Facet, Thresholds};
pub use kb::{Example, KbError, KbLayout, KnowledgeBase, Manifest};
pub use retrieve::{ExampleHit, RetrievalQuery, RetrieveError};
