//! Expert-style question generation from a document corpus, with bigram
//! deduplication, quality metrics and contrastive retrieval evaluation.
//!
//! All model calls go through [`gateway::Gateway`]; [`gateway::mock::MockProvider`]
//! gives deterministic offline behavior for tests and demos.

pub mod corpus;
pub mod dedup;
pub mod error;
pub mod exec;
pub mod gateway;
pub mod generator;
pub mod jsonl;
pub mod metrics;
pub mod retrieval;
pub mod text;

pub use error::{Error, ProviderError, Result};
