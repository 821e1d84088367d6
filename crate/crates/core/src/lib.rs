//! Semantic type discovery and multi-type annotation for collections of
//! tabular datasets.
//!
//! Columns are clustered by header and content similarity; each seed cluster
//! gets one open discovery prompt, and the resulting types flow to other
//! columns through closed-set checks over a descending threshold schedule.

pub mod annotation;
pub mod artifact;
pub mod baseline;
pub mod cascade;
pub mod clustering;
pub mod config;
pub mod discovery;
pub mod embedding;
pub mod evaluation;
pub mod ingest;
pub mod llmgate;
pub mod sampling;
pub mod scalar;
pub mod stage;
pub mod store;
pub mod typeindex;

pub use scalar::Scalar;

/// Scalar used by the pipeline.
pub type Real = f64;
pub type Embedding = embedding::EmbeddingVector<Real>;
pub type Signature = embedding::NumericSignature<Real>;
pub type Vectors = clustering::ColumnVectors<Real>;
